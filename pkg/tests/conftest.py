from pathlib import Path

import pytest

from detlab import config
from detlab.runner import build_domain, build_potential

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

# criterion label -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def load_config(name: str):
    return config.load(CONFIGS / name)


def domain_and_potential(name: str):
    cfg = load_config(name)
    dom = build_domain(cfg)
    return cfg, dom, build_potential(cfg, dom)


@pytest.fixture(scope="session")
def configs_dir() -> Path:
    return CONFIGS


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(ACCEPTANCE, key=lambda s: int(s[1:].split()[0])):
        ok, detail = ACCEPTANCE[label]
        terminalreporter.write_line(f"{label}: {'PASS' if ok else 'FAIL'}  {detail}")
