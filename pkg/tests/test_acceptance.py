"""Acceptance suite: one test per criterion, one printed PASS/FAIL line each.

Run with `pytest tests/test_acceptance.py -v -s`. Criteria 1-4 exercise the
full pipeline at the desk-scale 50x50 grid; 5 validates the solver against
independent oracles; 6 verifies the zero-leakage property empirically; 7 is
the model-level property suite; 8 checks CLI determinism.
"""
import math
import time

import numpy as np
import pytest

from skgsim import (
    CalibrationParams,
    ExperimentConfig,
    build_partition,
    build_scenario,
    run_protocol,
    sample_received_gains,
    sample_shadowing_field,
)
from skgsim.calibration import kappa_from_rho, noise_from_snr_min, rho_from_kappa, snr_linear
from skgsim.capacity import (
    Quantizer,
    channel_matrix,
    class_capacity,
    optimize_distribution,
)
from skgsim.channel import ChannelParams, PositionGrid, ReceiverConfig, expected_gain_factor
from skgsim.cli import main as cli_main
from skgsim.experiments import evaluate_capacity
from skgsim.partition import auto_delta
from oracles import dirichlet_search_lower_bound, pgd_capacity

SEEDS = range(10)


def report(num, name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"\nACCEPTANCE {num} ({name}): {status} {detail}")
    assert ok, f"criterion {num} failed: {detail}"


def test_criterion_1_quantizer_saturation():
    t0 = time.time()
    qs = [2, 4, 8, 16, 32, 64, 128]
    curves = []
    for seed in SEEDS:
        caps = [
            evaluate_capacity(ExperimentConfig(seed=seed, levels=q))[2].c_key_bits
            for q in qs
        ]
        curves.append(caps)
    curves = np.array(curves)
    mean_q2 = curves[:, 0].mean()
    mean_q4 = curves[:, 1].mean()
    ok = abs(mean_q2 - 1.0) <= 0.02 and abs(mean_q4 - 2.0) <= 0.05
    detail = f"mean C(Q=2)={mean_q2:.5f}, mean C(Q=4)={mean_q4:.5f}"
    # per seed: non-decreasing, and increments shrink once saturation starts
    for seed, caps in zip(SEEDS, curves):
        inc = np.diff(caps)
        if not np.all(inc >= -1e-6):
            ok, detail = False, f"seed {seed} capacity not monotone in Q: {caps}"
            break
        onset = next((i for i, v in enumerate(inc) if v < 0.5), len(inc) - 1)
        tail = inc[onset:]
        if not np.all(np.diff(tail) <= 0.05) or inc[-1] > 0.15:
            ok, detail = False, f"seed {seed} increments not saturating: {inc}"
            break
    elapsed = time.time() - t0
    ok = ok and elapsed <= 300
    report(1, "quantizer saturation", ok, f"{detail}; elapsed {elapsed:.0f}s")


def test_criterion_2_upper_bound_gap():
    t0 = time.time()
    worst_gap = 0.0
    detail_parts = []
    ok = True
    for seed in (0, 1, 2):
        cfg = ExperimentConfig(seed=seed)
        scen = build_scenario(cfg)
        part = scen.partition()
        sizes = part.sizes
        # class with |I| near 16; among those, the one cleanest under Q=128
        cands = [l for l in range(part.num_classes) if 12 <= sizes[l] <= 20]
        assert cands, "no class near size 16"
        kappa = scen.kappa
        sw2 = noise_from_snr_min(40.0, kappa, scen.bob_map)
        cal = CalibrationParams(snr_min_db=40.0, rho_db=cfg.rho_db, pilots=3000)
        best = None
        for l in cands:
            m = scen.bob_map.m[part.classes[l]]
            quant = Quantizer.from_range(m.min(), m.max(), 128)
            distinct = np.unique(quant.quantize(m)).size
            key = (distinct - sizes[l], -abs(int(sizes[l]) - 16), -l)
            if best is None or key > best[0]:
                best = (key, l)
        l = best[1]
        rec, _, _, _ = class_capacity(part, l, scen.bob_map, 128, cal, kappa, sw2)
        bound = math.log2(sizes[l])
        gap = bound - rec.capacity_bits
        if rec.capacity_bits > bound:  # hard bound assertion
            ok = False
        worst_gap = max(worst_gap, gap)
        detail_parts.append(f"seed{seed}: |I|={sizes[l]} gap={gap:.4f}")
    elapsed = time.time() - t0
    ok = ok and worst_gap <= 0.10 and elapsed <= 120
    report(2, "upper-bound gap at high SNR", ok,
           "; ".join(detail_parts) + f"; elapsed {elapsed:.0f}s")


def test_criterion_3_rho_ordering():
    t0 = time.time()
    snrs = [-10.0, -5.0, 0.0, 5.0, 10.0]
    rhos = [10.0, 0.0, -10.0]
    caps = np.zeros((len(rhos), len(snrs), len(SEEDS)))
    for ri, rho in enumerate(rhos):
        for si, snr in enumerate(snrs):
            for seed in SEEDS:
                cfg = ExperimentConfig(seed=seed, rho_db=rho, snr_min_db=snr)
                caps[ri, si, seed] = evaluate_capacity(cfg)[2].c_key_bits
    tol = 1e-6
    ord_hi = (caps[0] >= caps[1] - tol).sum(axis=1)  # per SNR point
    ord_lo = (caps[1] >= caps[2] - tol).sum(axis=1)
    mono = (np.diff(caps, axis=1) >= -tol).sum(axis=2)  # (rho, step)
    ok = bool(np.all(ord_hi >= 8) and np.all(ord_lo >= 8) and np.all(mono >= 8))
    elapsed = time.time() - t0
    ok = ok and elapsed <= 600
    report(3, "rho ordering and SNR monotonicity", ok,
           f"ordering rho10>=rho0 per point {ord_hi.tolist()}/10, "
           f"rho0>=rho-10 {ord_lo.tolist()}/10, min monotone {int(mono.min())}/10; "
           f"elapsed {elapsed:.0f}s")


def test_criterion_4_shadowing_distance_pilots():
    # Q=128 keeps the estimation noise visible at the quantizer scale, which
    # carries the shadowing-std and Eve-distance effects; at the default
    # Q=16 the class-spanning quantizer makes the channel effectively
    # noiseless and both effects fall below seed-to-seed variation.
    t0 = time.time()
    q = 128
    sig_wins = dist_wins = 0
    k_monotone = True
    for seed in SEEDS:
        base = ExperimentConfig(seed=seed, levels=q)
        c5 = evaluate_capacity(base)[2].c_key_bits
        c7 = evaluate_capacity(base.with_overrides(sigma_sh_a_db=7.0))[2].c_key_bits
        c19 = evaluate_capacity(base.with_overrides(eve_dist_m=19.0))[2].c_key_bits
        c213 = evaluate_capacity(base.with_overrides(eve_dist_m=213.0))[2].c_key_bits
        sig_wins += c7 > c5
        dist_wins += c213 > c19
        k_caps = [
            evaluate_capacity(base.with_overrides(pilots=k))[2].c_key_bits
            for k in range(1, 11)
        ]
        if not np.all(np.diff(k_caps) >= -1e-6):
            k_monotone = False
    elapsed = time.time() - t0
    ok = sig_wins >= 8 and dist_wins >= 8 and k_monotone and elapsed <= 600
    report(4, "shadowing/distance/pilot trends", ok,
           f"sigma7>sigma5 in {sig_wins}/10, d213>d19 in {dist_wins}/10, "
           f"K monotone per seed: {k_monotone}; elapsed {elapsed:.0f}s")


def test_criterion_5_solver_correctness():
    from skgsim.capacity import ChannelMatrix

    rng = np.random.default_rng(2024)
    worst_oracle = 0.0
    below_search = True
    for _ in range(50):
        m = int(rng.integers(2, 9))
        n = int(rng.integers(2, 17))
        mat = rng.dirichlet(np.full(n, rng.uniform(0.3, 1.5)), size=m)
        out = optimize_distribution(ChannelMatrix(matrix=mat))
        worst_oracle = max(worst_oracle, abs(out.capacity_bits - pgd_capacity(mat)))
        lb = dirichlet_search_lower_bound(mat, 100_000, rng)
        if out.capacity_bits < lb - 1e-9:
            below_search = False
    bsc = optimize_distribution(ChannelMatrix(matrix=np.array([[0.9, 0.1], [0.1, 0.9]])))
    h2 = -(0.1 * math.log2(0.1) + 0.9 * math.log2(0.9))
    bsc_ok = abs(bsc.capacity_bits - (1 - h2)) <= 1e-5
    uniform_ok = np.allclose(bsc.distribution.probabilities, 0.5, atol=1e-6)
    ok = worst_oracle <= 1e-6 and below_search and bsc_ok and uniform_ok
    report(5, "solver correctness", ok,
           f"max |BA-PGD| = {worst_oracle:.2e}, above random search: {below_search}, "
           f"BSC(0.1) = {bsc.capacity_bits:.6f}")


def test_criterion_6_zero_leakage():
    t0 = time.time()
    fails = []
    for seed in SEEDS:
        rep = run_protocol(ExperimentConfig(seed=seed, n_transmissions=10_000))
        if not (rep.leak_q_t_bits <= rep.leak_q_t_threshold
                and rep.leak_m_t_bits <= rep.leak_m_t_threshold):
            fails.append(seed)
    ok = not fails
    report(6, "zero leakage to Eve", ok,
           f"all 10 seeds below Miller-Madow + 3/sqrt(N) threshold"
           f"{'' if ok else ' except seeds ' + str(fails)}; elapsed {time.time()-t0:.0f}s")


def test_criterion_7_model_properties():
    problems = []

    # PMD row sums at two quantizer resolutions on a real scene
    cfg = ExperimentConfig(nx=20, ny=20, seed=0)
    scen = build_scenario(cfg)
    part = scen.partition()
    cal = scen.calibration()
    from skgsim.partition import largest_classes

    for q in (16, 128):
        for l in largest_classes(part, 5):
            idx = part.classes[l]
            m = scen.bob_map.m[idx]
            if m.max() <= m.min():
                continue
            quant = Quantizer.from_range(m.min(), m.max(), q)
            ch = channel_matrix(idx, scen.bob_map, quant, cal, scen.kappa, scen.sigma_w2)
            if not np.allclose(ch.matrix.sum(axis=1), 1.0, rtol=0.0, atol=1e-12):
                problems.append(f"row sums off at Q={q}")

    # Gudmundson lag-d_ref correlation over 2000 fields
    grid = PositionGrid(nx=20, ny=20, spacing=10.0, altitude=10.0)
    rx = ReceiverConfig(role="bob", position=(95.0, 95.0, 0.0), sigma_sh_db=5.0, d_ref_m=20.0)
    acc = 0.0
    count = 0
    for seed in range(2000):
        v = sample_shadowing_field(grid, rx, seed).values.reshape(20, 20)
        acc += (v[:, :-2] * v[:, 2:]).sum() + (v[:-2, :] * v[2:, :]).sum()
        count += 2 * 20 * 18
    corr = acc / count / 25.0
    if abs(corr - math.exp(-1)) > 0.05:
        problems.append(f"lag-d_ref correlation {corr:.4f} vs e^-1")

    # estimation-noise variance matches the model within 5%
    ch_par = ChannelParams(kappa=4.0, sigma_w2=0.5)
    draws = sample_received_gains(np.full(200_000, 2.0), ch_par, 3, 99)
    want = (4.0 / 5.0 + 0.5) / 6.0
    if abs(draws.var() / want - 1.0) > 0.05:
        problems.append("received-gain variance off")

    # calibration round trips to 1e-9 relative
    for rho in (-10.0, 0.0, 10.0):
        kappa = kappa_from_rho(rho, scen.bob_map.g_max)
        if abs(rho_from_kappa(kappa, scen.bob_map.g_max) - rho) > 1e-9 * max(1.0, abs(rho)):
            problems.append("rho round trip off")
    for target in (-5.0, 0.0, 10.0):
        sw2 = noise_from_snr_min(target, scen.kappa, scen.bob_map)
        achieved = 10.0 * math.log10(snr_linear(scen.bob_map.g, scen.kappa, sw2).min())
        if abs(achieved - target) > 1e-9 * max(1.0, abs(target)):
            problems.append("SNR_min round trip off")

    # partition: exact disjoint cover, and delta/2 refines it
    delta = auto_delta(scen.eve_map, scen.bob_map)
    coarse = build_partition(scen.eve_map, delta)
    fine = build_partition(scen.eve_map, delta / 2.0)
    covered = np.sort(np.concatenate(coarse.classes))
    if not np.array_equal(covered, np.arange(scen.grid.size)):
        problems.append("partition not a disjoint cover")
    owner = np.empty(scen.grid.size, dtype=int)
    for l, members in enumerate(coarse.classes):
        owner[members] = l
    for members in fine.classes:
        if np.unique(owner[members]).size != 1:
            problems.append("delta/2 does not refine delta")
            break

    ok = not problems
    report(7, "model-level property suite", ok, "; ".join(problems) or "all properties hold")


def test_criterion_8_cli_determinism(tmp_path):
    pairs = []
    base = ["--grid", "14", "14", "--seed", "11"]
    for i in (0, 1):
        d = tmp_path / f"maps{i}"
        cli_main(["gen-maps", *base, "--out", str(d)])
        s = tmp_path / f"sweep{i}.csv"
        cli_main(["capacity-sweep", *base, "--sweep", "Q", "2,8", "--reps", "2", "--out", str(s)])
        p = tmp_path / f"proto{i}.csv"
        cli_main(["run-protocol", *base, "--transmissions", "2000", "--reps", "2", "--out", str(p)])
        pairs.append((d, s, p))
    (d0, s0, p0), (d1, s1, p1) = pairs
    ok = all(
        (d0 / n).read_bytes() == (d1 / n).read_bytes()
        for n in ("bob_map.csv", "eve_map.csv", "partition.csv")
    )
    ok = ok and s0.read_bytes() == s1.read_bytes() and p0.read_bytes() == p1.read_bytes()
    report(8, "CLI determinism", ok, "byte-identical outputs for repeated invocations")
