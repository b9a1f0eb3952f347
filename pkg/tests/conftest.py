import re

ACCEPTANCE_FILE = "test_acceptance.py"


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if ACCEPTANCE_FILE not in rep.nodeid or rep.when != "call" and outcome != "error":
                continue
            m = re.search(r"test_criterion_(\d+)", rep.nodeid)
            if not m:
                continue
            detail = dict(rep.user_properties).get("detail", "")
            status = "PASS" if outcome == "passed" else "FAIL"
            lines.append((int(m.group(1)), f"criterion {m.group(1)}: {status}  {detail}".rstrip()))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, text in sorted(lines):
            terminalreporter.write_line(text)
