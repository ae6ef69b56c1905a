"""Exit criteria for the toolkit, one test per criterion.

Each test records a PASS/FAIL line that is printed in the pytest terminal
summary (``pytest tests/test_acceptance.py``).
"""

import dataclasses
import hashlib
import random
import time

import pytest

import tamper
import triangle
from conftest import make_wallet
from didsim import new_network, vc
from didsim.did import create_did
from didsim.scenarios import SCENARIOS, default_config, run_scenario

pytestmark = pytest.mark.acceptance

RESULTS: list[tuple[str, bool, str]] = []


def record(name: str, ok: bool, detail: str) -> None:
    RESULTS.append((name, ok, detail))
    assert ok, f"{name}: {detail}"


def sha(report) -> str:
    return hashlib.sha256(report.render().encode() + b"\0" + report.ledger_log.encode()).hexdigest()


def test_edge_only_authorization():
    problems, timings = [], {}
    for n in (1, 10, 100):
        start = time.perf_counter()
        edge = run_scenario(default_config("roaming_access", subscribers=n))
        base = run_scenario(default_config("baseline_centralized", subscribers=n))
        timings[n] = time.perf_counter() - start
        if edge.outcome != "success" or edge.message_counts["visited_home"] != 0:
            problems.append(f"N={n}: edge run {edge.outcome} visited_home={edge.message_counts['visited_home']}")
        if base.message_counts["visited_home"] != 2 * n:
            problems.append(f"N={n}: baseline visited_home={base.message_counts['visited_home']}")
        reduction = base.details["visited_home_reduction_percent"]
        if reduction != "100.00":
            problems.append(f"N={n}: reduction {reduction}")
        if not int(reduction.replace(".", "")) > 0:
            problems.append(f"N={n}: no reduction")
    if timings[100] >= 5:
        problems.append(f"N=100 took {timings[100]:.2f}s")
    record(
        "edge-only authorization",
        not problems,
        "; ".join(problems) or f"visited_home 0 vs 2N, reduction 100.00%, N=100 in {timings[100]:.2f}s",
    )


def _revocation_run(rng: random.Random) -> tuple[int, int, dict]:
    delays = {f"n{i}": rng.randint(0, 10) for i in range(5)}
    net = new_network(delays, seed=rng.randrange(2**32))
    origin = next(iter(delays))
    issuer, holder = make_wallet("issuer"), make_wallet("holder")
    create_did(net, origin, issuer)
    create_did(net, origin, holder)
    net.advance_to(net.max_delay)
    credential = vc.issue(net, origin, issuer, holder.did, vc.ACCESS_PERMISSION, {}, 0, 10**6, with_status=True)
    net.advance_to(net.clock + net.max_delay + rng.randint(0, 3))
    receipt = vc.revoke(net, origin, issuer, credential.status)
    first_all, first_node = None, {}
    tick = net.clock
    while first_all is None:
        net.advance_to(tick)
        rejecting = [n for n in delays if not vc.verify_credential(net, n, credential).accepted]
        for n in rejecting:
            first_node.setdefault(n, tick)
        if len(rejecting) == len(delays):
            first_all = tick
        tick += 1
    expected_node = {n: receipt.commit_tick + d for n, d in delays.items()}
    return first_all, receipt.commit_tick + max(delays.values()), {"nodes": first_node == expected_node}


def test_revocation_convergence():
    rng = random.Random(20)
    start = time.perf_counter()
    mismatches = []
    for run in range(20):
        got, expected, extra = _revocation_run(rng)
        if got != expected or not extra["nodes"]:
            mismatches.append(f"run {run}: first all-reject {got}, expected {expected}")
    elapsed = time.perf_counter() - start
    ok = not mismatches and elapsed < 10
    record(
        "revocation convergence",
        ok,
        "; ".join(mismatches) or f"20/20 runs reject everywhere at commit+max(delay), {elapsed:.2f}s",
    )


def test_trust_triangle_negative_suite():
    passed = []
    for case in triangle.CASES:
        report = triangle.run_case(case)
        if report.outcome == "reject" and report.failed() == [case]:
            passed.append(case)
    missing = sorted(set(triangle.CASES) - set(passed))
    record("trust-triangle negatives", not missing, f"{len(passed)}/6" + (f" missing {missing}" if missing else ""))


def test_tamper_fuzzing():
    start = time.perf_counter()
    outcome = tamper.fuzz(tamper.Fixture(), trials=12_000, seed=2024)
    elapsed = time.perf_counter() - start
    ok = not outcome["accepts"] and not outcome["crashes"] and elapsed < 60
    record(
        "tamper fuzzing",
        ok,
        f"{outcome['trials']} flips, {len(outcome['accepts'])} accepts, {len(outcome['crashes'])} crashes, "
        f"{elapsed:.2f}s",
    )


def test_rotation_semantics():
    problems = []
    for keep_old in (True, False):
        config = default_config("key_rotation_roaming", keep_old_assertion_key=keep_old)
        report = run_scenario(config)
        details = report.details
        commit = details["rotation_commit_tick"]
        if keep_old and report.outcome != "success":
            problems.append(f"keep_old=True gave {report.outcome}")
        if not keep_old:
            expected = commit + details["verifier_delay"]
            if report.outcome != "expected_denial" or details["first_denial_tick"] != expected:
                problems.append(f"keep_old=False denial at {details['first_denial_tick']}, expected {expected}")
        for node, delay in config.delays.items():
            first = details["old_key_ownership"][node]["first_reject_tick"]
            if first != commit + delay:
                problems.append(f"keep_old={keep_old} node {node}: old key rejected at {first}, expected {commit + delay}")
    record("rotation semantics", not problems, "; ".join(problems) or "both branches hold on every node")


def _all_configs():
    yield from (default_config(name) for name in sorted(SCENARIOS))
    yield default_config("roaming_access", subscribers=5, revoke_at_tick=2)
    yield default_config("ipx_alteration", revoke_ipx="ipx-1", revoke_at_tick=1)
    yield default_config("key_rotation_roaming", keep_old_assertion_key=False)
    yield default_config("location_attestation", variant="onboarding")


def test_determinism():
    diffs = []
    configs = list(_all_configs())
    for config in configs:
        first, second = run_scenario(config), run_scenario(config)
        if sha(first) != sha(second):
            diffs.append(config.scenario.name)
    record("determinism", not diffs, f"{len(configs) - len(diffs)}/{len(configs)} runs hash-identical")


def test_privacy_scan():
    hits, runs = [], 0
    for i, config in enumerate(_all_configs()):
        sentinel = f"SENTINEL-{i:03d}-{hashlib.sha256(str(i).encode()).hexdigest()[:12]}"
        params = {"claim_tag": sentinel}
        if config.scenario.name == "location_attestation":
            params.update(ssn=sentinel + "-ssn", cell_area=sentinel + "-cell")
        report = run_scenario(config.with_params(**params))
        runs += 1
        count = report.ledger_log.count("SENTINEL-")
        if count:
            hits.append(f"{config.scenario.name}: {count}")
    record("privacy scan", not hits, "; ".join(hits) or f"0 sentinel occurrences across {runs} ledger logs")


def test_iot_scale_smoke():
    config = default_config("roaming_access", subscribers=10_000)
    actors = tuple(
        dataclasses.replace(a, role="IoTDevice", actor_id="iot") if a.role == "Subscriber" else a
        for a in config.actors
    )
    config = dataclasses.replace(config, actors=actors)
    start = time.perf_counter()
    report = run_scenario(config)
    elapsed = time.perf_counter() - start
    details = report.details
    ok = (
        report.outcome == "success"
        and report.message_counts["visited_home"] == 0
        and details["ledger_transactions_during_access"] == 0
        and details["subscribers"] == 10_000
        and elapsed < 30
    )
    record(
        "IoT scale smoke",
        ok,
        f"10000 devices, visited_home={report.message_counts['visited_home']}, "
        f"ledger tx during access={details['ledger_transactions_during_access']}, {elapsed:.2f}s",
    )


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
