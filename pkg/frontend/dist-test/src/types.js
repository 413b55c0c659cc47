/** Shared shapes for the /v1 JSON API and the form. */
export const SHAPES = ["oval", "round", "irregular"];
export const MARGINS = [
    "circumscribed",
    "indistinct",
    "angular",
    "microlobulated",
    "spiculated",
];
export const ORIENTATIONS = ["parallel", "not_parallel"];
export const BIRADS_CATEGORIES = ["3", "4a", "4b", "4c", "5"];
export const COHORTS = ["retrospective", "prospective"];
