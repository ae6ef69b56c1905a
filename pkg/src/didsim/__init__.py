"""Decentralized identifiers and verifiable credentials on a simulated ledger."""

from typing import Mapping

from . import did, vc
from .ledger import LedgerNetwork

__version__ = "0.1.0"

VALIDATORS = {**did.VALIDATORS, **vc.VALIDATORS}


def new_network(delays: Mapping[str, int], seed: int = 0) -> LedgerNetwork:
    """A ledger network with the DID and revocation admission rules installed."""
    return LedgerNetwork(delays, seed=seed, validators=VALIDATORS)


__all__ = ["LedgerNetwork", "VALIDATORS", "new_network", "__version__"]
