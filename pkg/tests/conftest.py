CRITERIA = [
    ("test_criterion_01", "ontology pipeline fidelity"),
    ("test_criterion_02", "corpus compiler fidelity"),
    ("test_criterion_03", "pair-file format"),
    ("test_criterion_04", "miner oracle equivalence"),
    ("test_criterion_05", "loss and gradient correctness"),
    ("test_criterion_06", "training effectiveness"),
    ("test_criterion_07", "pca correctness"),
    ("test_criterion_08", "index exactness and recall"),
    ("test_criterion_09", "evaluator correctness"),
    ("test_criterion_10", "pipeline determinism"),
]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion, printed after the run."""
    outcome_by_test = {}
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, ()):
            if getattr(report, "when", "call") in ("call", "setup"):
                name = report.nodeid.rsplit("::", 1)[-1]
                outcome_by_test.setdefault(name, status)
    lines = []
    for test_name, label in CRITERIA:
        if test_name not in outcome_by_test:
            continue
        verdict = "PASS" if outcome_by_test[test_name] == "passed" else "FAIL"
        lines.append(f"criterion {test_name[-2:]} ({label}): {verdict}")
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
