"""``didsim`` command line.

Exit codes: 0 success (or a denial the config expected), 1 rejected /
unauthorized / unexpected outcome, 2 bad input or config.
"""

from __future__ import annotations

import functools
import sys
from pathlib import Path
from typing import Any

import click

from . import did as did_core
from . import vc, VALIDATORS
from .config import load_config, parse_config, read_config_data
from .crypto import canonicalize, from_hex, generate_keypair, parse_canonical
from .errors import (
    AuthorizationError,
    ConfigError,
    ConflictError,
    DidSimError,
    InputError,
    LifecycleError,
    NotFoundError,
)
from .ledger import LedgerNetwork
from .wallet import Wallet

DEFAULT_NODES = {"n0": 0}

_ERROR_LABELS = [
    (AuthorizationError, "authorization error", 1),
    (LifecycleError, "lifecycle error", 1),
    (ConflictError, "conflict error", 1),
    (NotFoundError, "not found", 1),
    (ConfigError, "config error", 2),
    (InputError, "input error", 2),
]


class Rejected(Exception):
    """Verification produced a reject; exit 1."""


def _exit_codes(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except Rejected as exc:
            click.echo(f"rejected: {exc}", err=True)
            sys.exit(1)
        except DidSimError as exc:
            for kind, label, code in _ERROR_LABELS:
                if isinstance(exc, kind):
                    click.echo(f"{label}: {exc}", err=True)
                    sys.exit(code)
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


def _emit(value: Any) -> None:
    click.echo(canonicalize(value).decode("utf-8"))


def _seed(text: str, flag: str) -> bytes:
    try:
        return from_hex(text.lower(), 32)
    except InputError:
        raise click.BadParameter("must be 64 hex characters (32 bytes)", param_hint=flag) from None


# -- persistent run directory ---------------------------------------------


class State:
    """A ledger plus wallets, optionally persisted to a run directory."""

    def __init__(self, directory: Path | None, network: LedgerNetwork, wallets: dict[str, Wallet]):
        self.directory = directory
        self.network = network
        self.wallets = wallets

    @classmethod
    def open(cls, directory: str | None, config: str | None) -> "State":
        nodes, seed = DEFAULT_NODES, 0
        if config is not None:
            run = load_config(config)
            nodes, seed = run.delays, run.seed
        if directory is None:
            return cls(None, LedgerNetwork(nodes, seed, VALIDATORS), {})
        path = Path(directory)
        meta_path = path / "state.json"
        if not meta_path.exists():
            return cls(path, LedgerNetwork(nodes, seed, VALIDATORS), {})
        try:
            meta = parse_canonical(meta_path.read_bytes().strip())
            lines = (path / "ledger.jsonl").read_text(encoding="utf-8").splitlines()
            network = LedgerNetwork.replay(
                meta["nodes"], lines, seed=meta["seed"], validators=VALIDATORS, clock=meta["clock"]
            )
            wallets = {}
            for wallet_file in sorted((path / "wallets").glob("*.json")):
                wallet = Wallet.from_dict(parse_canonical(wallet_file.read_bytes().strip()))
                wallets[wallet.name] = wallet
        except (OSError, UnicodeDecodeError, KeyError, TypeError) as exc:
            raise InputError(f"corrupt run directory {path}: {exc}") from None
        return cls(path, network, wallets)

    def wallet(self, name: str) -> Wallet:
        try:
            return self.wallets[name]
        except KeyError:
            raise InputError(f"no wallet named {name!r} in this run directory") from None

    def save(self) -> None:
        if self.directory is None:
            return
        (self.directory / "wallets").mkdir(parents=True, exist_ok=True)
        meta = {
            "config_version": 1,
            "nodes": self.network.delays,
            "seed": self.network.seed,
            "clock": self.network.clock,
        }
        (self.directory / "state.json").write_bytes(canonicalize(meta) + b"\n")
        (self.directory / "ledger.jsonl").write_text(self.network.export_log(), encoding="utf-8")
        for name, wallet in self.wallets.items():
            (self.directory / "wallets" / f"{name}.json").write_bytes(canonicalize(wallet.to_dict()) + b"\n")

    def node(self, node: str | None) -> str:
        if node is None:
            return self.network.nodes[0]
        if node not in self.network.delays:
            raise InputError(f"unknown node {node!r}")
        return node


_state_options = [
    click.option("--state-dir", type=click.Path(file_okay=False), help="Persistent run directory."),
    click.option("--config", "config_path", type=click.Path(dir_okay=False), help="Run config (nodes, seed)."),
    click.option("--node", help="Ledger node to act on (default: first node)."),
]


def state_options(fn):
    for option in reversed(_state_options):
        fn = option(fn)
    return fn


@click.group()
@click.version_option(package_name="didsim")
def cli() -> None:
    """Decentralized identifiers and credentials on a simulated ledger."""


@cli.command()
@click.option("--seed", "seed_hex", required=True, help="32-byte seed as hex.")
@_exit_codes
def keygen(seed_hex: str) -> None:
    """Print the public key derived from a seed."""
    keypair = generate_keypair(_seed(seed_hex, "--seed"))
    _emit({"public_key": keypair.public_key.hex(), "suite_id": keypair.suite_id})


@cli.command()
@state_options
@click.option("--ticks", "n", type=int, default=1, show_default=True)
@_exit_codes
def tick(state_dir, config_path, node, n) -> None:
    """Advance the simulation clock."""
    state = State.open(state_dir, config_path)
    state.network.tick(n)
    state.save()
    _emit({"clock": state.network.clock})


# -- DIDs ------------------------------------------------------------------


@cli.group(name="did")
def did_group() -> None:
    """Create, resolve, update and deactivate DIDs."""


@did_group.command("create")
@state_options
@click.option("--seed", "seed_hex", required=True, help="32-byte key seed as hex.")
@click.option("--wallet", "wallet_name", default="wallet", show_default=True)
@_exit_codes
def did_create(state_dir, config_path, node, seed_hex, wallet_name) -> None:
    state = State.open(state_dir, config_path)
    if wallet_name in state.wallets:
        raise ConflictError(f"wallet {wallet_name!r} already exists")
    wallet = Wallet.from_seed(wallet_name, _seed(seed_hex, "--seed"))
    _, document = did_core.create_did(state.network, state.node(node), wallet)
    state.wallets[wallet_name] = wallet
    state.save()
    _emit(document.to_dict())


@did_group.command("resolve")
@state_options
@click.option("--did", "did", required=True)
@_exit_codes
def did_resolve(state_dir, config_path, node, did) -> None:
    state = State.open(state_dir, config_path)
    found = did_core.resolve(state.network, state.node(node), did)
    if found is None:
        raise NotFoundError(f"{did} is not visible on this node")
    _emit(found.to_dict())


def _service(text: str) -> did_core.ServiceEndpointEntry:
    parts = text.split(",", 2)
    if len(parts) != 3:
        raise click.BadParameter("expected ID,TYPE,ENDPOINT", param_hint="--add-service")
    return did_core.ServiceEndpointEntry(*parts)


@did_group.command("update")
@state_options
@click.option("--did", "did", required=True)
@click.option("--wallet", "wallet_name", required=True, help="Wallet that signs the update.")
@click.option("--signer", help="Key reference to sign with (default: wallet's active key).")
@click.option("--rotate-seed", help="Replace the signing key with one derived from this seed.")
@click.option("--keep-old-as-assertion", is_flag=True, help="With --rotate-seed, keep the old key for assertions.")
@click.option("--add-service", multiple=True, help="#ID,TYPE,ENDPOINT; replaces an entry with the same id.")
@click.option("--controller", help="Appoint a controller DID.")
@_exit_codes
def did_update(state_dir, config_path, node, did, wallet_name, signer, rotate_seed,
               keep_old_as_assertion, add_service, controller) -> None:
    state = State.open(state_dir, config_path)
    wallet = state.wallet(wallet_name)
    at = state.node(node)
    if rotate_seed is not None:
        if did != wallet.did:
            raise InputError("key rotation is done by the DID's own wallet")
        receipt = did_core.rotate_key(
            state.network, at, wallet, generate_keypair(_seed(rotate_seed, "--rotate-seed")),
            keep_old_as_assertion=keep_old_as_assertion,
        )
    else:
        current = did_core.authoritative_document(state.network, did)
        if current is None:
            raise NotFoundError(f"{did} does not exist")
        services = {s.id: s for s in current.services}
        services.update((s.id, s) for s in map(_service, add_service))
        body = did_core.DidDocument(
            current.id, current.verification_methods, tuple(services.values()),
            controller if controller is not None else current.controller,
        )
        receipt = did_core.update_document(state.network, at, did, body, wallet, signer)
    state.save()
    _emit({"seq": receipt.seq, "commit_tick": receipt.commit_tick})


@did_group.command("deactivate")
@state_options
@click.option("--did", "did", required=True)
@click.option("--wallet", "wallet_name", required=True)
@click.option("--signer")
@_exit_codes
def did_deactivate(state_dir, config_path, node, did, wallet_name, signer) -> None:
    state = State.open(state_dir, config_path)
    receipt = did_core.deactivate(state.network, state.node(node), did, state.wallet(wallet_name), signer)
    state.save()
    _emit({"seq": receipt.seq, "commit_tick": receipt.commit_tick})


# -- credentials -----------------------------------------------------------


def _read_json(path: str) -> Any:
    try:
        return parse_canonical(Path(path).read_bytes().strip(), strict=False)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None


def _write_or_echo(value: dict, out: str | None) -> None:
    if out is None:
        _emit(value)
    else:
        Path(out).write_bytes(canonicalize(value) + b"\n")


@cli.group(name="vc")
def vc_group() -> None:
    """Issue, present, verify and revoke credentials."""


@vc_group.command("issue")
@state_options
@click.option("--wallet", "wallet_name", required=True, help="Issuer wallet.")
@click.option("--subject", required=True)
@click.option("--schema", required=True)
@click.option("--claims", "claims_json", default="{}", help="Claims as a JSON object.")
@click.option("--valid-from", type=int, default=0, show_default=True)
@click.option("--valid-until", type=int, required=True)
@click.option("--with-status", is_flag=True)
@click.option("--out", type=click.Path(dir_okay=False))
@_exit_codes
def vc_issue(state_dir, config_path, node, wallet_name, subject, schema, claims_json,
             valid_from, valid_until, with_status, out) -> None:
    state = State.open(state_dir, config_path)
    claims = parse_canonical(claims_json.encode(), strict=False)
    if not isinstance(claims, dict):
        raise InputError("--claims must be a JSON object")
    credential = vc.issue(
        state.network, state.node(node), state.wallet(wallet_name), subject, schema, claims,
        valid_from, valid_until, with_status,
    )
    state.save()
    _write_or_echo(credential.to_dict(), out)


@vc_group.command("present")
@click.option("--state-dir", type=click.Path(file_okay=False), required=True)
@click.option("--wallet", "wallet_name", required=True, help="Holder wallet.")
@click.option("--credential", "credential_paths", multiple=True, required=True, type=click.Path(dir_okay=False))
@click.option("--nonce", required=True, help="16-byte challenge nonce as hex.")
@click.option("--audience", required=True, help="Verifier DID.")
@click.option("--out", type=click.Path(dir_okay=False))
@_exit_codes
def vc_present(state_dir, wallet_name, credential_paths, nonce, audience, out) -> None:
    state = State.open(state_dir, None)
    credentials = [vc.Credential.from_dict(_read_json(p)) for p in credential_paths]
    presentation = vc.present(state.wallet(wallet_name), credentials, from_hex(nonce, 16), audience)
    _write_or_echo(presentation.to_dict(), out)


@vc_group.command("verify")
@state_options
@click.option("--credential", "credential_path", type=click.Path(dir_okay=False))
@click.option("--presentation", "presentation_path", type=click.Path(dir_okay=False))
@click.option("--subject", help="Expected credential subject.")
@click.option("--nonce", help="Expected presentation nonce (hex).")
@click.option("--audience", help="Expected presentation audience.")
@_exit_codes
def vc_verify(state_dir, config_path, node, credential_path, presentation_path, subject, nonce, audience) -> None:
    if (credential_path is None) == (presentation_path is None):
        raise click.UsageError("give exactly one of --credential or --presentation")
    state = State.open(state_dir, config_path)
    at = state.node(node)
    if credential_path is not None:
        credential = vc.Credential.from_dict(_read_json(credential_path))
        report = vc.verify_credential(state.network, at, credential, subject)
    else:
        if nonce is None or audience is None:
            raise click.UsageError("--presentation needs --nonce and --audience")
        presentation = vc.Presentation.from_dict(_read_json(presentation_path))
        report = vc.verify_presentation(state.network, at, presentation, from_hex(nonce, 16), audience)
    _emit(report.to_dict())
    if not report.accepted:
        raise Rejected("failed checks: " + ", ".join(f"checks.{c}" for c in report.failed()))


@vc_group.command("revoke")
@state_options
@click.option("--wallet", "wallet_name", required=True, help="Issuer wallet.")
@click.option("--credential", "credential_path", required=True, type=click.Path(dir_okay=False))
@_exit_codes
def vc_revoke(state_dir, config_path, node, wallet_name, credential_path) -> None:
    state = State.open(state_dir, config_path)
    credential = vc.Credential.from_dict(_read_json(credential_path))
    if credential.status is None:
        raise InputError("credential carries no status reference")
    receipt = vc.revoke(state.network, state.node(node), state.wallet(wallet_name), credential.status)
    state.save()
    _emit({"seq": receipt.seq, "commit_tick": receipt.commit_tick})


# -- scenarios -------------------------------------------------------------


@cli.group()
def scenario() -> None:
    """Run multi-operator flows."""


def _load_run_config(path: str, seed: int | None):
    if seed is None:
        return load_config(path)
    data = read_config_data(path)
    if not isinstance(data, dict):
        raise ConfigError("config must be a table")
    return parse_config({**data, "seed": seed})


@scenario.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", type=int, help="Override the config's run seed.")
@click.option("--ticks", "max_ticks", type=click.IntRange(min=0), help="Tick budget for the run.")
@click.option("--out", type=click.Path(dir_okay=False), help="Report path (default: config output.path or stdout).")
@click.option("--format", "fmt", type=click.Choice(["structured", "table"]))
@click.option("--export-log", type=click.Path(dir_okay=False), help="Write the ledger log here.")
@click.option("--export-messages", type=click.Path(dir_okay=False), help="Write the message log here.")
@_exit_codes
def scenario_run(config_path, seed, max_ticks, out, fmt, export_log, export_messages) -> None:
    from .scenarios import run_scenario

    config = _load_run_config(config_path, seed)
    report = run_scenario(config, max_ticks)
    text = report.render(fmt or config.output.format)
    target = out or config.output.path
    if target is None:
        click.echo(text, nl=False)
    else:
        Path(target).write_text(text, encoding="utf-8")
    if export_log:
        Path(export_log).write_text(report.ledger_log, encoding="utf-8")
    if export_messages:
        Path(export_messages).write_text(report.export_messages(), encoding="utf-8")
    click.echo(report.summary(), err=target is None)
    expected = config.scenario.expect
    if report.outcome == "failure":
        sys.exit(1)
    if expected is not None and report.outcome != expected:
        click.echo(f"outcome {report.outcome} does not match expected {expected}", err=True)
        sys.exit(1)


def main() -> None:
    cli(prog_name="didsim")


if __name__ == "__main__":
    main()
