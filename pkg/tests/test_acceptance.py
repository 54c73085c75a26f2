"""Release acceptance suite: one test per shipping criterion, in order.

Run `pytest -v tests/test_acceptance.py` to get one pass/fail line per
criterion. Tolerances, seeds, and runtime ceilings are frozen here; the
calibrated blob configuration in `_blob_config` is the reference setup for
the scheme-comparison criteria (6-8) and the determinism re-runs.
"""

import dataclasses
import math
import time

import mpmath
import numpy as np
import pytest

from test_channel import oracle_chain, rel_err

from uavfl import learning, protocol
from uavfl.channel import ChannelEnvironment, Position, link_sample
from uavfl.cli import write_metrics_csv
from uavfl.config import SimConfig
from uavfl.learning import (
    AsyncPolicy,
    ModelParams,
    TrainingHyper,
    async_aggregate,
    staleness_weight,
)
from uavfl.protocol import (
    InboxEntry,
    ServerInbox,
    compute_budget,
    one_round_latency,
    scheduled_epochs,
    try_opportunistic_transmit,
    uplink_latency,
)
from uavfl.sim import average_comm_overhead, run_simulation


# ---------------------------------------------------------------------------
# Shared reference configuration and a per-session run cache so the scheme
# comparison, the budget sweep, and the determinism check reuse each other's
# simulations instead of recomputing them.
# ---------------------------------------------------------------------------

ACCEPT_SEEDS = (1, 2, 3, 4, 5)


def _blob_config(scheme: str, b: int, seed: int, **overrides) -> SimConfig:
    """Calibrated desk-scale setup: 10 UAVs, pick 5, two-class shards."""
    base = dict(
        rounds=40,
        num_uavs=10,
        select_k=5,
        scheme=scheme,
        b=b,
        tau_max_s=10.0,
        seed=seed,
        local_epochs=6,
        batch_size=10,
        lr=0.4,
        num_classes=10,
        model_hidden=(12,),
        cut_layer=1,
        dataset="synthetic",
        synthetic_train=5000,
        synthetic_test=1000,
        synthetic_dim=64,
        synthetic_std=0.3,
        partition="noniid_shards",
        classes_per_user=2,
        cell_radius=120.0,
        bs_height=20.0,
        alt_min=60.0,
        alt_max=100.0,
        interruption_prob=0.3,
        sl_fraction=0.0,
    )
    base.update(overrides)
    return SimConfig(**base)


_RUN_CACHE: dict[tuple, tuple] = {}
_RUN_SECONDS: dict[tuple, float] = {}


def _run_cell(scheme: str, b: int, seed: int, **overrides):
    key = (scheme, b, seed, tuple(sorted(overrides.items())))
    if key not in _RUN_CACHE:
        t0 = time.perf_counter()
        metrics, _ = run_simulation(_blob_config(scheme, b, seed, **overrides))
        _RUN_SECONDS[key] = time.perf_counter() - t0
        _RUN_CACHE[key] = tuple(metrics)
    return _RUN_CACHE[key]


def _mean_final_accuracy(scheme: str, b: int, **overrides) -> float:
    return float(
        np.mean(
            [_run_cell(scheme, b, s, **overrides)[-1].test_accuracy for s in ACCEPT_SEEDS]
        )
    )


def _mean_overhead(scheme: str, b: int, **overrides) -> float:
    return float(
        np.mean(
            [
                average_comm_overhead(_run_cell(scheme, b, s, **overrides))
                for s in ACCEPT_SEEDS
            ]
        )
    )


# ---------------------------------------------------------------------------
# Criterion 1: the whole link chain matches an independent high-precision
# oracle on 1,000 random inputs to better than 1e-9, in under 5 seconds.
# ---------------------------------------------------------------------------


def test_criterion_01_channel_chain_matches_oracle():
    env = ChannelEnvironment()
    bs = Position(0.0, 0.0, 20.0)
    rng = np.random.default_rng(11)
    inputs = []
    for _ in range(1000):
        x, y = rng.uniform(-500.0, 500.0, size=2)
        z = rng.uniform(20.5, 80.0)
        k_db = rng.uniform(1.8, 5.0)
        n = rng.uniform(0.05, 1.0)
        inputs.append((x, y, z, k_db, n))

    t0 = time.perf_counter()
    worst = 0.0
    for x, y, z, k_db, n in inputs:
        got = link_sample(Position(x, y, z), bs, k_db, n, env)
        want = oracle_chain((x, y, z), (0.0, 0.0, 20.0), k_db, n, env)
        for got_v, want_v in (
            (got.distance_m, want["distance"]),
            (got.elevation_deg, want["elevation"]),
            (got.p_los, want["p_los"]),
            (got.path_loss_db, want["path_loss"]),
            (got.gain, want["gain"]),
            (got.rate_bps, want["rate"]),
        ):
            worst = max(worst, rel_err(got_v, want_v))
    elapsed = time.perf_counter() - t0

    assert worst < 1e-9, f"worst relative error {worst:.3e}"
    assert elapsed < 5.0, f"oracle sweep took {elapsed:.2f}s"
    print(f"criterion 1: worst rel err {worst:.2e} on 1000 inputs in {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# Criterion 2: analytic gradients agree with central finite differences on
# 50 random models and batches to 1e-4, in under 30 seconds.
# ---------------------------------------------------------------------------


def test_criterion_02_gradients_match_finite_differences():
    rng = np.random.default_rng(22)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        dim = int(rng.integers(3, 9))
        hidden = (int(rng.integers(3, 8)),)
        classes = int(rng.integers(2, 6))
        spec = learning.mlp_shape(dim, hidden, classes)
        model = ModelParams(rng.normal(scale=0.5, size=learning.param_count(spec)), spec)
        batch = int(rng.integers(2, 7))
        x = rng.normal(size=(batch, dim))
        y = rng.integers(0, classes, size=batch)

        grad = learning.gradient(model, x, y)
        coords = rng.choice(grad.size, size=8, replace=False)
        h = 1e-6
        for c in coords:
            bumped = model.values.copy()
            bumped[c] += h
            up = learning.cross_entropy_loss(ModelParams(bumped, spec), x, y)
            bumped[c] -= 2 * h
            down = learning.cross_entropy_loss(ModelParams(bumped, spec), x, y)
            fd = (up - down) / (2 * h)
            err = abs(fd - grad[c]) / max(1.0, abs(grad[c]))
            worst = max(worst, err)
    elapsed = time.perf_counter() - t0

    assert worst < 1e-4, f"worst normalized gradient error {worst:.3e}"
    assert elapsed < 30.0, f"gradient check took {elapsed:.2f}s"
    print(f"criterion 2: worst gradient err {worst:.2e} over 50 models in {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# Criterion 3: exact protocol invariants: budget arithmetic and
# non-negativity, uplink latency formulas, attempt schedules for six local
# epochs, and inbox overwrite semantics.
# ---------------------------------------------------------------------------


def test_criterion_03_protocol_invariants_exact():
    # Attempt schedules for e=6 across every allowed budget.
    assert scheduled_epochs(6, 1) == (6,)
    assert scheduled_epochs(6, 2) == (3, 6)
    assert scheduled_epochs(6, 3) == (2, 4, 6)
    assert scheduled_epochs(6, 4) == (2, 3, 5, 6)
    assert scheduled_epochs(6, 5) == (2, 3, 4, 5, 6)
    assert scheduled_epochs(6, 6) == (1, 2, 3, 4, 5, 6)

    # Uplink latency formulas, exactly.
    rng = np.random.default_rng(33)
    for _ in range(200):
        b = int(rng.integers(1, 7))
        m = int(rng.integers(1_000, 5_000_000))
        act = int(rng.integers(0, 2_000_000))
        r = float(rng.uniform(1e4, 1e8))
        assert uplink_latency("fl", b, m, act, r) == b * m / r
        assert uplink_latency("sl", b, m, act, r) == (b * m + act) / r
    assert uplink_latency("fl", 2, 100, 0, 0.0) == math.inf

    # Budget arithmetic and the full latency decomposition.
    for _ in range(200):
        b = int(rng.integers(1, 7))
        m = int(rng.integers(1_000, 5_000_000))
        r0 = float(rng.uniform(1e4, 1e8))
        budget = compute_budget(b, m, r0, 6)
        assert budget.extra_s == (b - 1) * m / r0
        assert budget.scheduled == scheduled_epochs(6, b)

        size = int(rng.integers(10, 2000))
        cps = 1e-4
        prof = one_round_latency("fl", 6, size, cps, b, m, m // 2, 0, r0, r0)
        assert prof.train_s == 6 * size * cps
        assert prof.uplink_s == b * m / r0
        assert prof.total_s == prof.train_s + prof.uplink_s + prof.downlink_s

    # Budget never goes negative; a cancelled attempt changes nothing.
    with pytest.raises(ValueError):
        protocol.TransmissionBudget(
            b=2, extra_s=-1e-9, scheduled=(3, 6), model_bits=10, baseline_rate_bps=1.0
        )
    inbox = ServerInbox()
    budget = compute_budget(3, 80_000, 1e5, 6)
    spec = learning.mlp_shape(1, (), 2)
    for attempt, rate in enumerate((1e5, 3e4, 1e5, 2e2, 9e9)):
        before_budget = budget.extra_s
        before_entry = inbox.get(7)
        ok = try_opportunistic_transmit(
            budget, ModelParams(np.full(4, float(attempt)), spec), rate, inbox, 7, 2, 1
        )
        assert budget.extra_s >= 0.0
        if not ok:
            assert budget.extra_s == before_budget
            assert inbox.get(7) is before_entry

    # Overwrite semantics: the final replaces any intermediate; under an
    # interruption the latest intermediate wins for the keep-intermediate
    # scheme, the drop scheme wipes the slot, the async scheme queues it.
    def seeded_inbox():
        box = ServerInbox()
        box.deposit(InboxEntry(5, ModelParams(np.zeros(4), spec), "intermediate", 2, 9))
        box.deposit(InboxEntry(5, ModelParams(np.ones(4), spec), "intermediate", 4, 9))
        assert box.get(5).epoch_tag == 4  # later deposit overwrote the earlier
        return box

    box = seeded_inbox()
    queue: list = []
    bits = protocol.final_upload(
        "opt", 5, ModelParams(np.full(4, 2.0), spec), False, box, queue, 9, 128, 6
    )
    assert bits == 128 and box.get(5).kind == "final"

    box = seeded_inbox()
    protocol.final_upload(
        "opt", 5, ModelParams(np.full(4, 2.0), spec), True, box, queue, 9, 128, 6
    )
    assert box.get(5).kind == "intermediate" and box.get(5).epoch_tag == 4

    box = seeded_inbox()
    protocol.final_upload(
        "discard", 5, ModelParams(np.full(4, 2.0), spec), True, box, queue, 9, 128, 6
    )
    assert box.get(5) is None

    box = ServerInbox()
    queue = []
    protocol.final_upload(
        "async", 5, ModelParams(np.full(4, 2.0), spec), True, box, queue, 9, 128, 6
    )
    assert box.get(5) is None and len(queue) == 1 and queue[0].round_tag == 9
    print("criterion 3: protocol invariants hold exactly")


# ---------------------------------------------------------------------------
# Criterion 4: with a single upload and no interruptions the
# keep-intermediate scheme degenerates to the drop scheme, byte-identical
# metrics files over 3 seeds and 20 rounds, in under 2 minutes.
# ---------------------------------------------------------------------------


def test_criterion_04_single_upload_degeneracy(tmp_path):
    t0 = time.perf_counter()
    for seed in (1, 2, 3):
        paths = []
        for scheme in ("opt", "discard"):
            metrics, _ = run_simulation(
                _blob_config(scheme, 1, seed, rounds=20, interruption_prob=0.0)
            )
            path = tmp_path / f"{scheme}_{seed}.csv"
            write_metrics_csv(path, list(metrics))
            paths.append(path)
        assert paths[0].read_bytes() == paths[1].read_bytes()
    elapsed = time.perf_counter() - t0
    assert elapsed < 120.0, f"degeneracy check took {elapsed:.2f}s"
    print(f"criterion 4: byte-identical metrics for 3 seeds in {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# Criterion 5: split-scheduled training produces bit-identical updates to
# plain training, while its uplink bill is larger by exactly the activation
# payload at equal model bits.
# ---------------------------------------------------------------------------


def test_criterion_05_split_equivalence_and_overhead():
    rng = np.random.default_rng(55)
    spec = learning.mlp_shape(12, (8, 5), 4)
    data = learning.DatasetPartition(
        rng.normal(size=(40, 12)), rng.integers(0, 4, size=40)
    )
    hyper = TrainingHyper(batch_size=8, learning_rate=0.2, num_classes=4)
    for cut in (1, 2):
        model = learning.init_model(spec, np.random.default_rng(100 + cut))
        plain = learning.local_train_epoch(model, data, hyper, np.random.default_rng(7))
        prefix, suffix = learning.split_model(model, cut)
        new_prefix, new_suffix = learning.train_epoch_split(
            prefix, suffix, data, hyper, np.random.default_rng(7)
        )
        split = learning.join_model(new_prefix, new_suffix)
        assert plain.values.tobytes() == split.values.tobytes()

    # Power-of-two rates make the latency arithmetic exact in floats.
    for rate in (2.0**18, 2.0**20, 2.0**23):
        for b in (1, 2, 3):
            m, act = 29_120, 76_800
            fl_bits = uplink_latency("fl", b, m, 0, rate) * rate
            sl_bits = uplink_latency("sl", b, m, act, rate) * rate
            assert sl_bits - fl_bits == act
            assert sl_bits > fl_bits
    print("criterion 5: split training bit-identical; uplink differs by the activation bits")


# ---------------------------------------------------------------------------
# Criterion 6: desk-scale scheme comparison. Mean final accuracy over 5
# seeds must order keep-intermediate (b=2) above the stale-queue baseline
# above the drop baseline, with at least a 3-point lead over drop, inside
# 15 minutes of simulation time.
# ---------------------------------------------------------------------------


def test_criterion_06_scheme_ordering_and_gap():
    opt = _mean_final_accuracy("opt", 2)
    asy = _mean_final_accuracy("async", 1)
    dis = _mean_final_accuracy("discard", 1)
    cells = [
        ("opt", 2, s, ()) for s in ACCEPT_SEEDS
    ] + [("async", 1, s, ()) for s in ACCEPT_SEEDS] + [
        ("discard", 1, s, ()) for s in ACCEPT_SEEDS
    ]
    elapsed = sum(_RUN_SECONDS[k] for k in cells)

    assert opt > asy > dis, f"ordering violated: opt={opt:.4f} async={asy:.4f} discard={dis:.4f}"
    gap_pp = (opt - dis) * 100.0
    assert gap_pp >= 3.0 - 1e-9, f"opt-discard gap {gap_pp:.2f}pp below 3pp"
    assert elapsed < 900.0, f"comparison runs took {elapsed:.1f}s"
    print(
        f"criterion 6: opt={opt:.4f} > async={asy:.4f} > discard={dis:.4f} "
        f"(gap {gap_pp:+.2f}pp) in {elapsed:.1f}s"
    )


# ---------------------------------------------------------------------------
# Criterion 7: mean communication overhead is non-decreasing in the budget
# over b in {1,2,3} and the b=2 / b=1 ratio lies in [1.5, 2.8]; reuses the
# criterion-6 runs for b=2.
# ---------------------------------------------------------------------------


def test_criterion_07_overhead_scaling_with_budget():
    overheads = {b: _mean_overhead("opt", b) for b in (1, 2, 3)}
    assert overheads[1] <= overheads[2] + 1e-12
    assert overheads[2] <= overheads[3] + 1e-12
    ratio = overheads[2] / overheads[1]
    assert 1.5 <= ratio <= 2.8, f"b2/b1 overhead ratio {ratio:.3f} outside [1.5, 2.8]"
    print(
        "criterion 7: overhead MB/round "
        + " <= ".join(f"b{b}={overheads[b]:.6f}" for b in (1, 2, 3))
        + f", ratio {ratio:.3f}"
    )


# ---------------------------------------------------------------------------
# Criterion 8: raising the latency ceiling across a 3-point grid weakly
# increases both the mean number of selected users and the mean overhead.
# ---------------------------------------------------------------------------


def test_criterion_08_latency_ceiling_screening():
    taus = (0.32, 0.335, 10.0)
    mean_selected, mean_overhead = [], []
    for tau in taus:
        cells = [
            _run_cell("opt", 2, seed, rounds=20, tau_max_s=tau) for seed in (1, 2, 3)
        ]
        mean_selected.append(
            float(np.mean([m.num_selected for metrics in cells for m in metrics]))
        )
        mean_overhead.append(
            float(np.mean([average_comm_overhead(metrics) for metrics in cells]))
        )
    for lo, hi in zip(mean_selected, mean_selected[1:]):
        assert lo <= hi + 1e-12
    for lo, hi in zip(mean_overhead, mean_overhead[1:]):
        assert lo <= hi + 1e-12
    assert mean_selected[0] < mean_selected[-1]  # the grid actually bites
    print(
        f"criterion 8: tau grid {taus} -> selected {[f'{v:.2f}' for v in mean_selected]}, "
        f"overhead {[f'{v:.6f}' for v in mean_overhead]}"
    )


# ---------------------------------------------------------------------------
# Criterion 9: the staleness weight at delay 1 equals 0.4/sqrt(2) to 1e-12
# and the stale-queue aggregation reproduces a hand-computed weighted mean.
# ---------------------------------------------------------------------------


def test_criterion_09_staleness_weighting_exact():
    policy = AsyncPolicy(alpha=0.4, exponent=0.5, max_delay=1)
    assert abs(staleness_weight(1, policy) - 0.4 * 2.0**-0.5) < 1e-12

    spec = learning.mlp_shape(1, (), 2)
    timely = [
        ModelParams(np.array([1.0, -2.0, 0.5, 4.0]), spec),
        ModelParams(np.array([3.0, 0.0, -1.5, 2.0]), spec),
    ]
    stale = [(ModelParams(np.array([10.0, 10.0, -10.0, 0.0]), spec), 1)]
    out = async_aggregate(timely, stale, policy)
    want = np.array(
        [2.9911947447943636, 0.36289277409224974, -1.6770437594433065, 2.628301970702114]
    )
    np.testing.assert_allclose(out.values, want, rtol=1e-14, atol=0.0)
    print("criterion 9: staleness weighting exact")


# ---------------------------------------------------------------------------
# Criterion 10: re-running any acceptance cell with the same seed produces a
# byte-identical metrics file.
# ---------------------------------------------------------------------------


def test_criterion_10_reruns_are_byte_identical(tmp_path):
    for label, config in (
        ("comparison", _blob_config("opt", 2, 1)),
        ("degeneracy", _blob_config("opt", 1, 1, rounds=20, interruption_prob=0.0)),
        ("screening", _blob_config("opt", 2, 1, rounds=20, tau_max_s=0.335)),
    ):
        blobs = []
        for attempt in (0, 1):
            metrics, _ = run_simulation(config)
            path = tmp_path / f"{label}_{attempt}.csv"
            write_metrics_csv(path, list(metrics))
            blobs.append(path.read_bytes())
        assert blobs[0] == blobs[1], f"{label} rerun differs"
    print("criterion 10: seeded reruns byte-identical")
