"""Deterministic multi-stakeholder ledger simulation.

A single sequencer orders transactions into one append-only log. Each
stakeholder node sees a prefix of that log: a transaction committed at tick
``c`` reaches node ``n`` once ``clock >= c + delay[n]``. Because commit ticks
never decrease along the log, every node's view is a prefix and can be found
by bisection.
"""

from __future__ import annotations

import bisect
import dataclasses
import enum
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Mapping

from .crypto import Signature, canonicalize, parse_canonical
from .errors import InputError


class TxKind(str, enum.Enum):
    DID_CREATE = "DidCreate"
    DID_UPDATE = "DidUpdate"
    DID_DEACTIVATE = "DidDeactivate"
    REVOCATION_UPDATE = "RevocationUpdate"


LIFECYCLE_KINDS = frozenset({TxKind.DID_CREATE, TxKind.DID_UPDATE, TxKind.DID_DEACTIVATE})


@dataclass(frozen=True, eq=False)
class Transaction:
    kind: TxKind
    payload: dict[str, Any]
    submitter_did: str
    submitter_signature: Signature
    seq: int | None = None
    commit_tick: int | None = None

    def signing_input(self) -> bytes:
        return canonicalize(self.payload)

    def to_record(self) -> dict[str, Any]:
        return {
            "seq": self.seq,
            "commit_tick": self.commit_tick,
            "kind": self.kind.value,
            "payload": self.payload,
            "submitter_did": self.submitter_did,
            "submitter_signature": self.submitter_signature.to_dict(),
        }

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "Transaction":
        try:
            return cls(
                kind=TxKind(record["kind"]),
                payload=record["payload"],
                submitter_did=record["submitter_did"],
                submitter_signature=Signature.from_dict(record["submitter_signature"]),
                seq=record.get("seq"),
                commit_tick=record.get("commit_tick"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed transaction record: {exc}") from None


@dataclass(frozen=True)
class Receipt:
    seq: int
    commit_tick: int


@dataclass(frozen=True)
class NodeView:
    node: str
    delivered: tuple[Transaction, ...]
    as_of_tick: int


Validator = Callable[["LedgerNetwork", Transaction], None]


class LedgerNetwork:
    """Globally ordered log replicated to nodes with fixed per-node delays.

    ``validators`` maps a transaction kind to an admission hook. Hooks run
    against the sequencer's authoritative state (the full committed log) and
    raise to reject.
    """

    def __init__(
        self,
        delays: Mapping[str, int],
        seed: int = 0,
        validators: Mapping[TxKind, Validator] | None = None,
    ):
        if not delays:
            raise InputError("a ledger network needs at least one node")
        for node, delay in delays.items():
            if not isinstance(node, str) or not node:
                raise InputError("node ids must be non-empty strings")
            if isinstance(delay, bool) or not isinstance(delay, int) or delay < 0:
                raise InputError(f"delay for node {node!r} must be a non-negative integer")
        self.delays: dict[str, int] = dict(delays)
        self.seed = seed
        self.clock = 0
        self.validators: dict[TxKind, Validator] = dict(validators or {})
        self._log: list[Transaction] = []
        self._commit_ticks: list[int] = []
        self._by_did: dict[str, list[int]] = {}
        self._by_registry: dict[str, list[int]] = {}

    @property
    def nodes(self) -> list[str]:
        return list(self.delays)

    @property
    def max_delay(self) -> int:
        return max(self.delays.values())

    @property
    def committed_log(self) -> tuple[Transaction, ...]:
        return tuple(self._log)

    def __len__(self) -> int:
        return len(self._log)

    def _check_node(self, node: str) -> int:
        try:
            return self.delays[node]
        except (KeyError, TypeError):
            raise InputError(f"unknown ledger node {node!r}") from None

    def submit(self, node: str, tx: Transaction) -> Receipt:
        """Validate ``tx`` and append it with the next sequence number."""
        self._check_node(node)
        if tx.seq is not None or tx.commit_tick is not None:
            raise InputError("transaction already carries a sequence number")
        if not isinstance(tx.kind, TxKind):
            raise InputError(f"unknown transaction kind {tx.kind!r}")
        if not isinstance(tx.submitter_signature, Signature):
            raise InputError("transaction is missing its signature")
        # private copy: later mutation of the caller's dict can't reach the log
        payload = parse_canonical(canonicalize(tx.payload))
        if not isinstance(payload, dict):
            raise InputError("transaction payload must be a map")
        key = self._index_key(tx.kind, payload)
        pending = dataclasses.replace(tx, payload=payload)
        hook = self.validators.get(tx.kind)
        if hook is not None:
            hook(self, pending)
        committed = dataclasses.replace(pending, seq=len(self._log), commit_tick=self.clock)
        self._log.append(committed)
        self._commit_ticks.append(self.clock)
        index = self._by_registry if tx.kind is TxKind.REVOCATION_UPDATE else self._by_did
        index.setdefault(key, []).append(committed.seq)
        return Receipt(committed.seq, committed.commit_tick)

    @staticmethod
    def _index_key(kind: TxKind, payload: dict[str, Any]) -> str:
        field = "registry_id" if kind is TxKind.REVOCATION_UPDATE else "did"
        key = payload.get(field)
        if not isinstance(key, str) or not key:
            raise InputError(f"{kind.value} payload needs a string {field!r}")
        return key

    def tick(self, n: int = 1) -> None:
        if isinstance(n, bool) or not isinstance(n, int) or n < 1:
            raise InputError("tick count must be a positive integer")
        self.clock += n

    def advance_to(self, tick: int) -> None:
        """Move the clock forward to ``tick`` (no-op if already there)."""
        if tick > self.clock:
            self.tick(tick - self.clock)

    def delivered_count(self, node: str) -> int:
        horizon = self.clock - self._check_node(node)
        if horizon < 0:
            return 0
        return bisect.bisect_right(self._commit_ticks, horizon)

    def view(self, node: str) -> NodeView:
        return NodeView(node, tuple(self._log[: self.delivered_count(node)]), self.clock)

    @staticmethod
    def _latest(seqs: list[int] | None, limit: int) -> int | None:
        if not seqs:
            return None
        pos = bisect.bisect_left(seqs, limit)
        return seqs[pos - 1] if pos else None

    def query_latest(self, node: str, did: str) -> Transaction | None:
        """Highest-seq lifecycle transaction for ``did`` in ``node``'s view."""
        seq = self._latest(self._by_did.get(did), self.delivered_count(node))
        return None if seq is None else self._log[seq]

    def authoritative_latest(self, did: str) -> Transaction | None:
        """Like query_latest, over the full committed log."""
        seq = self._latest(self._by_did.get(did), len(self._log))
        return None if seq is None else self._log[seq]

    def did_history(self, did: str) -> list[Transaction]:
        return [self._log[s] for s in self._by_did.get(did, ())]

    def registry_transactions(self, registry_id: str, node: str | None = None) -> list[Transaction]:
        """Revocation transactions for a registry, optionally limited to a node's view."""
        seqs = self._by_registry.get(registry_id, [])
        if node is not None:
            seqs = seqs[: bisect.bisect_left(seqs, self.delivered_count(node))]
        return [self._log[s] for s in seqs]

    def delivery_tick(self, seq: int, node: str) -> int:
        """Tick at which committed transaction ``seq`` becomes visible on ``node``."""
        return self._log[seq].commit_tick + self._check_node(node)

    def export_log(self) -> str:
        """One canonical transaction record per line."""
        return "".join(
            canonicalize(tx.to_record()).decode("utf-8") + "\n" for tx in self._log
        )

    @classmethod
    def replay(
        cls,
        delays: Mapping[str, int],
        lines: Iterable[str],
        *,
        seed: int = 0,
        validators: Mapping[TxKind, Validator] | None = None,
        clock: int | None = None,
    ) -> "LedgerNetwork":
        """Rebuild a network from an exported log, re-running admission hooks."""
        network = cls(delays, seed=seed, validators=validators)
        origin = next(iter(network.delays))
        for lineno, line in enumerate(lines, 1):
            if not line.strip():
                continue
            tx = Transaction.from_record(parse_canonical(line.rstrip("\n")))
            if tx.seq != len(network) or not isinstance(tx.commit_tick, int):
                raise InputError(f"log line {lineno}: sequence gap or bad commit tick")
            if tx.commit_tick < network.clock:
                raise InputError(f"log line {lineno}: commit ticks go backwards")
            network.advance_to(tx.commit_tick)
            network.submit(origin, dataclasses.replace(tx, seq=None, commit_tick=None))
        if clock is not None:
            if clock < network.clock:
                raise InputError("stored clock is behind the last commit")
            network.advance_to(clock)
        return network
