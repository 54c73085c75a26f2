"""Round-driven simulation loop tying channel, mobility, learning, protocol.

One communication round: per-UAV channel refresh and rate measurement,
latency-screened selection, local training with scheduled opportunistic
intermediate uploads, interruption-aware final uploads, aggregation, and
evaluation. Every random draw comes from a keyed substream of the global
seed, so runs are bit-reproducible and schemes are comparable seed-by-seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import channel, learning, mobility, protocol
from .config import SimConfig, validate

__all__ = [
    "RNG_DOMAINS",
    "rng_substream",
    "RoundMetrics",
    "SimState",
    "build_state",
    "run_round",
    "run_simulation",
    "average_comm_overhead",
    "METRICS_HEADER",
]

RNG_DOMAINS = {
    "init": 0,
    "mobility": 1,
    "channel": 2,
    "interruption": 3,
    "shuffle": 4,
    "selection": 5,
    "dataset": 6,
    "partition": 7,
}

METRICS_HEADER = (
    "round,test_loss,test_accuracy,comm_mb,num_selected,"
    "num_final_received,num_intermediate_used,num_interrupted,num_cancelled"
)


def rng_substream(seed: int, domain: str, user_id: int = 0, round_index: int = 0):
    """Independent generator keyed by (seed, domain, user, round)."""
    if domain not in RNG_DOMAINS:
        raise ValueError(f"unknown rng domain {domain!r}")
    key = (int(seed), RNG_DOMAINS[domain], int(user_id), int(round_index))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


@dataclass
class RoundMetrics:
    """One CSV row of per-round outcomes."""

    round_index: int
    test_loss: float
    test_accuracy: float
    comm_mb: float
    num_selected: int
    num_final_received: int
    num_intermediate_used: int
    num_interrupted: int
    num_cancelled: int

    def csv_row(self) -> str:
        return ",".join(
            [
                str(self.round_index),
                repr(self.test_loss),
                repr(self.test_accuracy),
                repr(self.comm_mb),
                str(self.num_selected),
                str(self.num_final_received),
                str(self.num_intermediate_used),
                str(self.num_interrupted),
                str(self.num_cancelled),
            ]
        )


def average_comm_overhead(metrics: list[RoundMetrics]) -> float:
    """Mean delivered megabytes per round; zero for an empty run."""
    if not metrics:
        return 0.0
    return float(np.mean([m.comm_mb for m in metrics]))


@dataclass
class SimState:
    """Everything that persists across rounds."""

    config: SimConfig
    env: channel.ChannelEnvironment
    geometry: mobility.CellGeometry
    bs: channel.Position
    uavs: list[mobility.UavState]
    partitions: list[learning.DatasetPartition]
    test_set: learning.Dataset
    global_model: learning.ModelParams
    hyper: learning.TrainingHyper
    async_policy: learning.AsyncPolicy
    inbox: protocol.ServerInbox
    stale_queue: list[protocol.StaleUpdate]
    full_model_bits: int
    ue_model_bits: int
    act_bits: list[int]
    bandwidth_share: float


def _build_datasets(config: SimConfig) -> tuple[learning.Dataset, learning.Dataset]:
    if config.dataset == "synthetic":
        # one draw for train and test so both share the class geometry
        pool = learning.synthetic_blobs(
            config.synthetic_train + config.synthetic_test,
            config.num_classes,
            config.synthetic_dim,
            config.synthetic_std,
            rng_substream(config.seed, "dataset", 0, 0),
        )
        split = config.synthetic_train
        train = learning.Dataset(pool.features[:split], pool.labels[:split])
        test = learning.Dataset(pool.features[split:], pool.labels[split:])
        return train, test
    train = learning.load_mnist(
        config.mnist_images, config.mnist_labels, config.mnist_train_limit
    )
    test = learning.load_mnist(config.mnist_test_images, config.mnist_test_labels)
    return train, test


def build_state(config: SimConfig) -> SimState:
    """Materialize datasets, partitions, UAV fleet, and the initial model."""
    problems = validate(config)
    if problems:
        raise ValueError("invalid config: " + "; ".join(problems))
    env = channel.ChannelEnvironment(
        los_a=config.a0,
        los_b=config.b0,
        excess_loss_los_db=config.eta_los_db,
        excess_loss_nlos_db=config.eta_nlos_db,
        carrier_hz=config.carrier_hz,
        uav_bandwidth_hz=config.bw_uav_hz,
        uav_power_dbm=config.p_uav_dbm,
        bs_bandwidth_hz=config.bw_bs_hz,
        bs_power_dbm=config.p_bs_dbm,
        noise_dbm_per_hz=config.noise_dbm_per_hz,
        noise_total_dbm=config.noise_total_dbm,
        fspl_exponent=config.fspl_exponent,
    )
    geometry = mobility.CellGeometry(
        cell_radius_m=config.cell_radius,
        bs_height_m=config.bs_height,
        alt_min_m=config.alt_min,
        alt_max_m=config.alt_max,
    )
    train, test = _build_datasets(config)
    if train.features.shape[1] != test.features.shape[1]:
        raise ValueError("train and test feature dimensions differ")
    if int(train.labels.max()) >= config.num_classes:
        raise ValueError("dataset labels exceed num_classes")
    pspec = learning.PartitionSpec(
        mode=config.partition,
        classes_per_user=config.classes_per_user,
        alpha_class=config.alpha_d,
        alpha_size=config.alpha_imd,
    )
    parts = learning.partition(
        train, config.num_uavs, pspec, rng_substream(config.seed, "partition", 0, 0)
    )
    shape = learning.mlp_shape(
        train.features.shape[1], config.model_hidden, config.num_classes
    )
    global_model = learning.init_model(shape, rng_substream(config.seed, "init", 0, 0))
    num_sl = round(config.sl_fraction * config.num_uavs)
    uavs = []
    for i in range(config.num_uavs):
        placement = rng_substream(config.seed, "mobility", i, 0)
        uavs.append(
            mobility.UavState(
                uav_id=i,
                position=mobility.random_cylinder_position(geometry, placement),
                waypoint=mobility.random_cylinder_position(geometry, placement),
                speed_mps=config.speed_mps,
                k_db=config.k_min_db,
                sl_required=i < num_sl,
                compute_s_per_sample=config.compute_s_per_sample,
                partition_id=i,
            )
        )
    prefix, _ = learning.split_model(global_model, config.cut_layer)
    cut_width = shape[config.cut_layer - 1].fan_out
    return SimState(
        config=config,
        env=env,
        geometry=geometry,
        bs=geometry.bs_position(),
        uavs=uavs,
        partitions=parts,
        test_set=test,
        global_model=global_model,
        hyper=learning.TrainingHyper(
            local_epochs=config.local_epochs,
            batch_size=config.batch_size,
            learning_rate=config.lr,
            num_classes=config.num_classes,
        ),
        async_policy=learning.AsyncPolicy(
            alpha=config.async_alpha,
            exponent=config.async_a,
            max_delay=config.max_delay,
        ),
        inbox=protocol.ServerInbox(),
        stale_queue=[],
        full_model_bits=protocol.model_size_bits(global_model),
        ue_model_bits=protocol.model_size_bits(prefix),
        act_bits=[
            protocol.activation_bits(parts[i].size, cut_width)
            * (config.local_epochs if config.activations_per_epoch else 1)
            for i in range(config.num_uavs)
        ],
        bandwidth_share=1.0 if config.bandwidth_share == "dedicated" else 1.0 / config.select_k,
    )


def _mode(uav: mobility.UavState) -> str:
    return "sl" if uav.sl_required else "fl"


def _tx_bits(state: SimState, uav: mobility.UavState) -> int:
    return state.ue_model_bits if uav.sl_required else state.full_model_bits


def run_round(state: SimState, round_index: int) -> RoundMetrics:
    """Advance the simulation by one communication round (mutates state)."""
    cfg = state.config
    seed = cfg.seed
    n_share = state.bandwidth_share

    # Round-start channel refresh: new Rician factor, measured baseline rates,
    # and this round's interruption draws for every UAV.
    uplink0: dict[int, float] = {}
    downlink0: dict[int, float] = {}
    cut_epoch: dict[int, int] = {}
    for uav in state.uavs:
        uav.k_db = mobility.resample_k(
            rng_substream(seed, "channel", uav.uav_id, round_index),
            cfg.k_min_db,
            cfg.k_max_db,
        )
        sample = channel.link_sample(uav.position, state.bs, uav.k_db, n_share, state.env)
        uplink0[uav.uav_id] = sample.rate_bps
        downlink0[uav.uav_id] = channel.transmission_rate_bps(
            n_share,
            state.env.bs_bandwidth_hz,
            sample.gain,
            state.env.bs_power_dbm,
            state.env.noise_dbm_per_hz,
            state.env.noise_total_dbm,
        )
        irq_rng = rng_substream(seed, "interruption", uav.uav_id, round_index)
        uav.interrupted = mobility.sample_interruption(irq_rng, cfg.interruption_prob)
        if uav.interrupted:
            cut_epoch[uav.uav_id] = mobility.draw_interruption_epoch(irq_rng, cfg.local_epochs)

    # Latency screening and uniform selection.
    latency = {
        uav.uav_id: protocol.one_round_latency(
            _mode(uav),
            cfg.local_epochs,
            state.partitions[uav.partition_id].size,
            uav.compute_s_per_sample,
            cfg.b,
            state.full_model_bits,
            state.ue_model_bits,
            state.act_bits[uav.uav_id],
            uplink0[uav.uav_id],
            downlink0[uav.uav_id],
            cfg.sl_compute_fraction,
        ).total_s
        for uav in state.uavs
    }
    selection = protocol.select_users(
        state.uavs,
        latency,
        cfg.tau_max_s,
        cfg.select_k,
        rng_substream(seed, "selection", 0, round_index),
    )
    selected = set(selection.selected)

    delivered_bits = 0
    num_cancelled = 0
    num_interrupted = 0
    num_final_received = 0

    for uav in state.uavs:
        mob_rng = rng_substream(seed, "mobility", uav.uav_id, round_index)
        if uav.uav_id not in selected:
            for _ in range(cfg.local_epochs):
                mobility.step_position(uav, state.geometry, cfg.epoch_dt_s, mob_rng)
            continue

        if uav.interrupted:
            num_interrupted += 1
        part = state.partitions[uav.partition_id]
        params = state.global_model.copy()
        tx_bits = _tx_bits(state, uav)
        budget = protocol.compute_budget(
            cfg.b, tx_bits, uplink0[uav.uav_id], cfg.local_epochs
        )
        shuffle_rng = rng_substream(seed, "shuffle", uav.uav_id, round_index)
        for epoch in range(1, cfg.local_epochs + 1):
            mobility.step_position(uav, state.geometry, cfg.epoch_dt_s, mob_rng)
            link = channel.link_sample(uav.position, state.bs, uav.k_db, n_share, state.env)
            params = learning.local_train_epoch(params, part, state.hyper, shuffle_rng)
            if epoch in budget.scheduled and epoch != cfg.local_epochs:
                blocked = uav.interrupted and epoch >= cut_epoch[uav.uav_id]
                if not blocked and protocol.try_opportunistic_transmit(
                    budget, params, link.rate_bps, state.inbox,
                    uav.uav_id, epoch, round_index,
                ):
                    delivered_bits += tx_bits
                else:
                    num_cancelled += 1
        bits = protocol.final_upload(
            cfg.scheme,
            uav.uav_id,
            params,
            uav.interrupted,
            state.inbox,
            state.stale_queue,
            round_index,
            tx_bits,
            cfg.local_epochs,
        )
        if bits:
            num_final_received += 1
            delivered_bits += bits
        if uav.sl_required:
            delivered_bits += state.act_bits[uav.uav_id]

    timely, stale = protocol.collect_for_aggregation(
        state.inbox, state.stale_queue, cfg.scheme, round_index
    )
    num_intermediate_used = sum(1 for e in timely if e.kind == "intermediate")
    delivered_bits += sum(item.bits for item, _ in stale)

    if timely or stale:
        if cfg.scheme == "async":
            state.global_model = learning.async_aggregate(
                [e.params for e in timely],
                [(item.params, delay) for item, delay in stale],
                state.async_policy,
            )
        elif cfg.aggregate == "weighted":
            state.global_model = learning.fedavg_weighted(
                [e.params for e in timely],
                [state.partitions[e.user_id].size for e in timely],
            )
        else:
            state.global_model = learning.fedavg([e.params for e in timely])

    test_loss, test_accuracy = learning.evaluate(state.global_model, state.test_set)
    return RoundMetrics(
        round_index=round_index,
        test_loss=test_loss,
        test_accuracy=test_accuracy,
        comm_mb=delivered_bits / 8e6,
        num_selected=len(selection.selected),
        num_final_received=num_final_received,
        num_intermediate_used=num_intermediate_used,
        num_interrupted=num_interrupted,
        num_cancelled=num_cancelled,
    )


def run_simulation(config: SimConfig) -> tuple[list[RoundMetrics], learning.ModelParams]:
    """Run all configured rounds; returns per-round metrics and the final model."""
    state = build_state(config)
    metrics = []
    for round_index in range(1, config.rounds + 1):
        metrics.append(run_round(state, round_index))
    return metrics, state.global_model
