/**
 * Client-side descent of an exported partition tree. Mirrors the server's
 * documented conventions: ordinal category codes, breadth-first node ids
 * (children of i at 2i+1 / 2i+2), and "go left iff value < threshold".
 * Used to anticipate subgroup changes in the what-if panel without waiting
 * on the network; the server response remains authoritative.
 */
export const SHAPE_CODES = { oval: 0, round: 1, irregular: 2 };
export const MARGIN_CODES = {
    circumscribed: 0, indistinct: 1, angular: 2, microlobulated: 3, spiculated: 4,
};
export const ORIENTATION_CODES = { parallel: 0, not_parallel: 1 };
const ORDINAL = {
    shape: SHAPE_CODES,
    margins: MARGIN_CODES,
    orientation: ORIENTATION_CODES,
};
const PAYLOAD_KEY = { size: "size_mm" };
export function ordinalValue(feature, payload) {
    const raw = payload[PAYLOAD_KEY[feature] ?? feature];
    if (feature in ORDINAL) {
        const code = ORDINAL[feature][String(raw)];
        if (code === undefined)
            throw new Error(`unknown ${feature} value '${String(raw)}'`);
        return code;
    }
    const value = typeof raw === "number" ? raw : Number(String(raw));
    if (Number.isNaN(value))
        throw new Error(`non-numeric ${feature} value`);
    return value;
}
export function assignLeaf(tree, payload) {
    let nid = 0;
    for (;;) {
        const node = tree.nodes[String(nid)];
        if (node === undefined)
            throw new Error(`missing node ${nid} in tree export`);
        if (node.threshold === undefined)
            return nid;
        const value = ordinalValue(node.feature, payload);
        nid = value < node.threshold ? 2 * nid + 1 : 2 * nid + 2;
    }
}
export function leafIds(tree) {
    return Object.entries(tree.nodes)
        .filter(([, node]) => node.threshold === undefined)
        .map(([id]) => parseInt(id, 10))
        .sort((a, b) => a - b);
}
