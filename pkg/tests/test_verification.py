import math

import pytest

from wfstein.config import ExperimentConfig
from wfstein.tools.interpolator import weight_kernel
from wfstein.verification import (
    CHECKS,
    GROUPS,
    VerificationRecord,
    check,
    corrupt_weight_kernel,
    run_verification_suite,
)


@pytest.fixture(scope="module")
def cfg():
    return ExperimentConfig(mc_samples=20_000, coupling_reps=20_000)


def test_every_group_has_checks():
    assert set(CHECKS) >= set(GROUPS)
    assert all(CHECKS[g] for g in GROUPS)


def test_unknown_group(cfg):
    with pytest.raises(ValueError):
        run_verification_suite(cfg, groups=["interpolator", "astrology"])
    with pytest.raises(ValueError):
        check("astrology")


def test_interpolator_group_passes(cfg):
    report = run_verification_suite(cfg, groups=["interpolator"])
    assert report.records
    assert report.passed, [r.name for r in report.failures]
    names = {r.name for r in report.records}
    assert "weights.reproduces_cubics" in names
    assert set(report.by_group()) == {"interpolator"}


def test_corrupted_weights_fail_the_suite(cfg):
    report = run_verification_suite(cfg, groups=["interpolator"], weights=corrupt_weight_kernel(weight_kernel()))
    assert not report.passed
    failed = {r.name for r in report.failures}
    assert "weights.reproduces_cubics" in failed


@pytest.mark.parametrize("group", ["beta_tail", "dirichlet"])
def test_cheap_groups_pass(cfg, group):
    report = run_verification_suite(cfg, groups=[group])
    assert report.records
    assert report.passed, [(r.name, r.value, r.bound) for r in report.failures]


def test_record_schema(cfg):
    report = run_verification_suite(cfg, groups=["beta_tail"])
    record = report.to_dict()["records"][0]
    assert set(record) == {"name", "group", "value", "bound", "passed", "detail"}
    assert record["group"] == "beta_tail"


def test_crashing_check_becomes_failed_record(cfg, monkeypatch):
    def broken(ctx):
        yield VerificationRecord(name="first", group="rate", value=0.0, bound=1.0, passed=True)
        raise RuntimeError("boom")

    monkeypatch.setitem(CHECKS, "rate", [broken])
    report = run_verification_suite(cfg, groups=["rate"])
    assert [r.name for r in report.records] == ["first", "broken"]
    crashed = report.records[1]
    assert not crashed.passed and math.isnan(crashed.value)
    assert "boom" in crashed.detail
