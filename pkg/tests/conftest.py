import pytest

from lesionrisk import (GeneratorConfig, LesionRecord, SplitSpec, split_dataset,
                        synthesize, train_risk_model)


def make_record(**overrides) -> LesionRecord:
    base = dict(id="r1", age=51.0, size=16.0, ri=0.4, palpable=1, shape="irregular",
                margins="spiculated", orientation="not_parallel", birads="5",
                cohort="prospective", label=1)
    base.update(overrides)
    return LesionRecord(**base)


@pytest.fixture(scope="session")
def small_synth():
    """A labeled synthetic cohort shared by read-only tests."""
    ds, oracle = synthesize(GeneratorConfig(n=600, seed=11))
    return ds, oracle


@pytest.fixture(scope="session")
def fitted_model(small_synth):
    ds, _ = small_synth
    train, cal, test = split_dataset(ds, SplitSpec(250, 250, 100, "random", 5))
    model, report = train_risk_model(train, Cs=(0.1, 1.0), k=3, seed=7)
    return model, report, train, cal, test


@pytest.fixture(scope="session")
def calibrated_bundle():
    """A calibrated bundle over a mid-sized cohort, shared by service/bundle tests."""
    from lesionrisk import build_bundle, calibrate_model

    ds, _ = synthesize(GeneratorConfig(n=2000, seed=101))
    train, cal, test = split_dataset(ds, SplitSpec(500, 1000, 500, "random", 2))
    model, report = train_risk_model(train, Cs=(0.1, 1.0), k=3, seed=2)
    calres = calibrate_model(model, cal, alpha=0.1, seed=2,
                             depths=(2, 3), min_leaves=(60, 100))
    bundle = build_bundle(model, calres, alpha=0.1,
                          metadata={"seed": 2, "grid_report": report.to_json_dict()})
    return bundle, test
