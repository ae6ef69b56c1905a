import hashlib
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from didsim import new_network  # noqa: E402
from didsim.did import create_did  # noqa: E402
from didsim.wallet import Wallet  # noqa: E402

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture]
)
settings.load_profile("default")

DATA = Path(__file__).parent / "data"


def seed_for(label: str) -> bytes:
    return hashlib.sha256(label.encode()).digest()


def make_wallet(name: str) -> Wallet:
    return Wallet.from_seed(name, seed_for(name))


@pytest.fixture
def net():
    return new_network({"a": 0, "b": 2, "c": 5})


@pytest.fixture
def trio(net):
    """Issuer, holder and verifier wallets registered and visible everywhere."""
    wallets = [make_wallet(n) for n in ("issuer", "holder", "verifier")]
    for w in wallets:
        create_did(net, "a", w)
    net.advance_to(net.max_delay)
    return wallets


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in module.RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
