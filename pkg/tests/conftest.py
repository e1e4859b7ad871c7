"""Shared fixtures plus a per-criterion summary for the acceptance suite."""

from __future__ import annotations

import pytest

# Maps acceptance test names to the human-readable criterion label printed
# in the terminal summary.
CRITERION_LABELS = {
    "test_geometry_oracle_agreement": "geometry oracles (disc/rectangle exact match)",
    "test_metric_oracle_agreement": "metric oracles (DSC/recall/RMSD)",
    "test_matching_optimality": "matching optimality vs exhaustive enumeration",
    "test_gradient_check": "analytic vs finite-difference gradients",
    "test_shape_contract": "network shape contract at working resolution",
    "test_decoder_round_trip": "decoder round-trip on ideal maps",
    "test_training_smoke": "training smoke (10 epochs, 200 frames)",
    "test_end_to_end_quality": "end-to-end quality (full training protocol)",
    "test_determinism": "determinism (bit-identical reruns)",
}

_results: dict = {}


def pytest_runtest_logreport(report):
    if not report.nodeid.rpartition("::")[2].startswith("test_"):
        return
    name = report.nodeid.rpartition("::")[2].split("[")[0]
    if name not in CRITERION_LABELS:
        return
    if report.when == "call":
        _results[name] = report.outcome
    elif report.when == "setup" and report.outcome != "passed":
        _results[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for name, label in CRITERION_LABELS.items():
        outcome = _results.get(name)
        if outcome is None:
            status = "NOT RUN"
        elif outcome == "passed":
            status = "PASS"
        elif outcome == "skipped":
            status = "SKIPPED"
        else:
            status = "FAIL"
        tr.write_line(f"  {status:8s} {label}")


@pytest.fixture(scope="session")
def single_thread_torch():
    import torch

    torch.set_num_threads(1)
    return torch
