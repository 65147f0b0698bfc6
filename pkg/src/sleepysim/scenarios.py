"""Canned scenario library: one builder per acceptance criterion plus the
attack separation demos. The attack demos use deliberately harsh schedules
(honest participation decays below early corrupt levels) that sit outside
the admissible envelope; the sweep scenarios are admissible by construction.
"""

from typing import Dict, Optional

from .config import INFINITE, ParticipationSchedule, ScenarioConfig


def fluctuating_sweep(n: int, seed: int, horizon: int = 400, delta: int = 2,
                      adversary_style: str = "equivocate") -> ScenarioConfig:
    """Admissible (Tb, Tb, 1/2) fully-fluctuating run, Tb = 8 * delta."""
    corrupt = max(1, (n - 1) // 4)
    tb = 8 * delta
    return ScenarioConfig(
        n=n, delta=delta, horizon=horizon, rho=0.5,
        t_forward=tb, t_backward=tb,
        lambda_bits=32, seed=seed,
        protocol="fluctuating_compiled", adversary_mode="external",
        adversary={"name": "equivocate", "params": {"style": adversary_style}},
        schedule={"pattern": "fully_fluctuating",
                  "params": {"corrupt": corrupt, "dwell": 4 * delta,
                             "require_admissible": [tb, tb, 0.5]}},
        env_input_spec={"period": 4 * delta, "start": 2, "count": horizon // (4 * delta)},
    )


def decaying_sweep(n: int, seed: int, horizon: int = 400, delta: int = 2) -> ScenarioConfig:
    """Admissible decaying run at the default epoch scale, Tf = 10 * alpha."""
    corrupt = max(1, (n - 1) // 4)
    cfg = ScenarioConfig(
        n=n, delta=delta, horizon=horizon, rho=0.5,
        lambda_bits=32, seed=seed,
        protocol="decaying_compiled", adversary_mode="external",
        adversary={"name": "equivocate", "params": {"style": "equivocate", "wakeness": False}},
        schedule={"pattern": "decaying",
                  "params": {"corrupt": corrupt, "corrupt_until": horizon // 4}},
        env_input_spec={"period": 4 * delta, "start": 2, "count": horizon // (4 * delta)},
    )
    cfg.t_forward = 10 * cfg.epoch_len()
    cfg.t_backward = INFINITE
    schedule_params = cfg.schedule["params"]
    schedule_params["require_admissible"] = [cfg.t_forward, INFINITE, 0.5]
    return cfg


def comm_scaling(n: int, seed: int, horizon: int = 100, delta: int = 2) -> ScenarioConfig:
    """All-honest fluctuating run with a binding sampling constant, for the
    communication ratio test."""
    return ScenarioConfig(
        n=n, delta=delta, horizon=horizon, rho=0.5,
        t_forward=8 * delta, t_backward=8 * delta,
        lambda_bits=32, seed=seed,
        protocol="fluctuating_compiled", adversary_mode="external",
        adversary={"name": "null", "params": {}},
        schedule={"pattern": "fully_fluctuating", "params": {"corrupt": 0, "dwell": 4 * delta}},
        params={"c_sample": 0.15},
    )


def _demo_schedule_decaying(n: int, horizon: int, n_corrupt: int, agent_awake: bool,
                            victim_wake: int, thin_from: int) -> ParticipationSchedule:
    """Harsh decaying schedule: corrupt cohort awake early (agent optionally
    throughout), most honest nodes sleep at thin_from, one stays, the victim
    wakes late. Intentionally outside the admissible envelope."""
    full = (1 << horizon) - 1
    rows = [0] * n
    corrupt_ids = list(range(n - n_corrupt, n))
    honest_ids = list(range(n - n_corrupt))
    victim = honest_ids[-1]
    survivor = honest_ids[-2]
    for p in honest_ids[:-2]:
        rows[p] = (1 << thin_from) - 1
    rows[survivor] = full
    rows[victim] = full & ~((1 << victim_wake) - 1)
    corrupt_until = thin_from // 2
    for p in corrupt_ids:
        rows[p] = (1 << corrupt_until) - 1
    if agent_awake:
        rows[corrupt_ids[0]] = full
    return ParticipationSchedule(
        n=n, horizon=horizon, awake_rows=rows,
        corrupt=[p in corrupt_ids for p in range(n)],
    )


def key_transfer_demo(mode: str, seed: int = 7) -> ScenarioConfig:
    """Key-transfer-strengthened forward simulation against the epoch-recovery
    protocol. Standard mode: the agent out-votes the thin live honest cohort
    at a late-waking victim. External mode: cross-key signing is refused."""
    n, delta, horizon = 10, 2, 240
    n_corrupt = 4
    victim_wake = 160
    schedule = _demo_schedule_decaying(n, horizon, n_corrupt, agent_awake=True,
                                       victim_wake=victim_wake, thin_from=96)
    strike = victim_wake - 1
    victim = n - n_corrupt - 1
    return ScenarioConfig(
        n=n, delta=delta, horizon=horizon, rho=0.5,
        t_forward=INFINITE, t_backward=INFINITE,
        alpha=32, lambda_bits=32, seed=seed,
        protocol="decaying_compiled", adversary_mode=mode,
        adversary={"name": "key_transfer",
                   "params": {"victim": victim, "strike_slot": strike,
                              "target_view": victim_wake // (4 * delta) + 1}},
        schedule=schedule,
        env_input_spec={"period": 8, "start": 2, "count": 12},
        expect_violations=(mode == "standard"),
    )


def forward_sim_demo(mode: str, target: str = "base", seed: int = 11) -> ScenarioConfig:
    """Pre-computed forward simulation. Against the raw protocol the victim
    counts a corrupt tip majority and adopts the fake chain; against the
    epoch-recovery protocol the single stale fork level is outvoted."""
    n, delta, horizon = 10, 2, 240
    n_corrupt = 4
    full = (1 << horizon) - 1
    rows = [0] * n
    corrupt_ids = list(range(n - n_corrupt, n))
    honest_ids = list(range(n - n_corrupt))
    victim = honest_ids[-1]
    survivor = honest_ids[-2]
    victim_wake = 160
    thin_from = 96
    if target == "base":
        # Early honest nodes never wake, so the victim hears one real tip.
        for p in honest_ids[:-2]:
            rows[p] = 0
    else:
        for p in honest_ids[:-2]:
            rows[p] = (1 << thin_from) - 1
    rows[survivor] = full
    rows[victim] = full & ~((1 << victim_wake) - 1)
    strike = thin_from // 2 - 1
    for p in corrupt_ids:
        rows[p] = (1 << (strike + 1)) - 1
    schedule = ParticipationSchedule(n=n, horizon=horizon, awake_rows=rows,
                                     corrupt=[p in corrupt_ids for p in range(n)])
    expect = (target == "base")
    return ScenarioConfig(
        n=n, delta=delta, horizon=horizon, rho=0.5,
        t_forward=INFINITE, t_backward=INFINITE,
        alpha=32, lambda_bits=32, seed=seed,
        protocol=target if target != "compiled" else "decaying_compiled",
        adversary_mode=mode,
        adversary={"name": "forward_sim",
                   "params": {"victim": victim, "strike_slot": strike, "fake_len": 6}},
        schedule=schedule,
        env_input_spec={"period": 8, "start": 2, "count": 10},
        expect_violations=expect,
    )


def backward_sim_demo(mode: str, target: str = "naive_longest", seed: int = 13) -> ScenarioConfig:
    """Late corrupt cohort fabricates a long private history. The naive
    longest-chain control adopts it; the wakeness-filtered protocol holds the
    counted majority and rejects it."""
    n, delta, horizon = 9, 2, 160
    n_corrupt = 3
    full = (1 << horizon) - 1
    rows = [0] * n
    corrupt_ids = list(range(n - n_corrupt, n))
    honest_ids = list(range(n - n_corrupt))
    victim = honest_ids[-1]
    corrupt_wake = 96
    victim_wake = 120
    for p in honest_ids[:-1]:
        rows[p] = full
    rows[victim] = full & ~((1 << victim_wake) - 1)
    for p in corrupt_ids:
        rows[p] = full & ~((1 << corrupt_wake) - 1)
    schedule = ParticipationSchedule(n=n, horizon=horizon, awake_rows=rows,
                                     corrupt=[p in corrupt_ids for p in range(n)])
    tb = 8 * delta
    return ScenarioConfig(
        n=n, delta=delta, horizon=horizon, rho=0.5,
        t_forward=tb, t_backward=tb,
        lambda_bits=32, seed=seed,
        protocol=target, adversary_mode=mode,
        adversary={"name": "backward_sim",
                   "params": {"victim": victim, "strike_slot": victim_wake - 1,
                              "fake_len": 24}},
        schedule=schedule,
        env_input_spec={"period": 8, "start": 2, "count": 8},
        expect_violations=(target == "naive_longest"),
    )


ATTACK_DEMOS = {
    ("key_transfer", "standard"): lambda: key_transfer_demo("standard"),
    ("key_transfer", "external"): lambda: key_transfer_demo("external"),
    ("forward_sim", "standard"): lambda: forward_sim_demo("standard", target="base"),
    ("forward_sim", "external"): lambda: forward_sim_demo("external", target="compiled"),
    ("backward_sim", "standard"): lambda: backward_sim_demo("standard", target="naive_longest"),
    ("backward_sim", "external"): lambda: backward_sim_demo("external",
                                                            target="fluctuating_compiled"),
}


def attack_demo_config(name: str, mode: str) -> ScenarioConfig:
    key = (name, mode)
    if key not in ATTACK_DEMOS:
        from .errors import UnknownAttack
        raise UnknownAttack(f"no demo for {name!r} in {mode!r} mode")
    return ATTACK_DEMOS[key]()


def scenario_files() -> Dict[str, ScenarioConfig]:
    """The shipped config library, one entry per acceptance surface."""
    out = {
        "criterion1_fluctuating_n9": fluctuating_sweep(9, seed=1),
        "criterion2_decaying_n9": decaying_sweep(9, seed=1),
        "criterion3_key_transfer_standard": key_transfer_demo("standard"),
        "criterion3_key_transfer_external": key_transfer_demo("external"),
        "criterion9_comm_n16": comm_scaling(16, seed=1),
        "demo_forward_sim_raw": forward_sim_demo("standard", target="base"),
        "demo_forward_sim_compiled": forward_sim_demo("external", target="compiled"),
        "demo_backward_sim_naive": backward_sim_demo("standard", target="naive_longest"),
        "demo_backward_sim_filtered": backward_sim_demo("external",
                                                        target="fluctuating_compiled"),
    }
    return out
