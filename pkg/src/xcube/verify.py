"""Cross-engine oracle suite behind ``xcube verify``.

Each check compares two independent routes (brute-force classical sum,
structure enumeration, Monte Carlo) and returns (passed, detail).
"""

from __future__ import annotations

import logging
import time

import numpy as np
from scipy import stats

from xcube.duality import Membrane, corner_set, membrane_identity_check
from xcube.exact import (build_ensemble, classical_oracle, configuration_probabilities,
                         ensemble_stats, fidelity_exact, global_entanglement, heat_capacity,
                         one_qubit_diagonals)
from xcube.lattice import Axis, build_geometry
from xcube.plaquette_mc import (MCConfig, SpinLattice, configuration_index, run,
                                sample_final_configurations)
from xcube.stabilizer import build_stabilizers, degeneracy_exponent

log = logging.getLogger(__name__)


def check_degeneracy(sizes=(2, 3, 4, 5)):
    ks = {L: degeneracy_exponent(build_stabilizers(build_geometry(L))) for L in sizes}
    return all(k == 6 * L - 3 for L, k in ks.items()), f"k={ks}"


def check_partition_duality(betas=(0.1, 0.3, 0.5, 1.0)):
    ens = build_ensemble(build_geometry(2))
    diffs = np.array([classical_oracle(2, b).logZ - ensemble_stats(ens, b).logZ for b in betas])
    multiple = diffs[0] / np.log(2)
    ok = np.ptp(diffs) < 1e-10 and abs(multiple - round(multiple)) < 1e-10
    return ok, f"logZ_cl - logZ_q = {multiple:.12f} ln2, spread {np.ptp(diffs):.1e}"


def check_plaquette_map(beta=0.5):
    ens = build_ensemble(build_geometry(2))
    w_minus = one_qubit_diagonals(ens, beta)
    oracle = classical_oracle(2, beta)
    err = np.abs((1 - 2 * w_minus) - oracle.plaquette_expectations).max()
    cv_err = abs(heat_capacity(ensemble_stats(ens, beta)) - oracle.heat_capacity)
    return err < 1e-10 and cv_err < 1e-10, f"max plaquette error {err:.1e}, C_v error {cv_err:.1e}"


def check_global_entanglement(sizes=(2, 3), betas=(0.1, 0.3, 0.551, 1.0)):
    worst = 0.0
    for L in sizes:
        ens = build_ensemble(build_geometry(L))
        for b in betas:
            ge, ge_u = global_entanglement(ens, b)
            worst = max(worst, abs(ge - ge_u))
    return worst < 1e-10, f"max |GE - (1 - u^2)| = {worst:.1e}"


def fidelity_residuals(ens, beta=0.4, dbetas=(0.02, 0.01, 0.005)):
    cv = heat_capacity(ensemble_stats(ens, beta))
    return [abs((1 - fidelity_exact(ens, beta, d)) / d**2 - cv / (8 * beta**2)) for d in dbetas]


def check_fidelity_law(beta=0.4):
    res = fidelity_residuals(build_ensemble(build_geometry(3)), beta)
    ratios = [res[i] / res[i + 1] for i in range(len(res) - 1)]
    return all(abs(r - 2) <= 0.3 for r in ratios), f"residual ratios {np.round(ratios, 4).tolist()}"


def check_mc_energy(beta=0.3, sweeps=100_000, seed=11):
    exact = ensemble_stats(build_ensemble(build_geometry(3)), beta).u
    series = run(SpinLattice(3), MCConfig(beta=beta, sweeps=sweeps, thermalization=sweeps // 100,
                                          seed=seed))
    u, err = series.u()
    return abs(u - exact) <= 3 * err, f"MC u={u:.5f}+-{err:.5f}, exact {exact:.5f}"


def stationary_chi2(beta=0.5, n_chains=2000, sweeps=500, seed=5):
    """Chi-square p-value of final configurations of independent chains
    against exact L=2 Boltzmann probabilities (cells with < 5 expected pooled)."""
    configs = sample_final_configurations(2, beta, n_chains, sweeps, seed)
    counts = np.bincount(configuration_index(configs), minlength=256)
    expected = configuration_probabilities(2, beta) * n_chains
    big = expected >= 5
    obs = np.append(counts[big], counts[~big].sum())
    exp = np.append(expected[big], expected[~big].sum())
    return float(stats.chisquare(obs, exp).pvalue)


def check_stationary(n_chains=2000, sweeps=500):
    p = stationary_chi2(n_chains=n_chains, sweeps=sweeps)
    return p > 0.01, f"chi-square p = {p:.3f}"


def check_membrane_identity(L=8, n_configs=200, n_membranes=10, seed=3):
    rng = np.random.default_rng(seed)
    g = build_geometry(L)
    for _ in range(n_membranes):
        size = rng.integers(1, L, size=2)
        mem = Membrane.rectangle(Axis(rng.integers(3)), int(rng.integers(L)),
                                 tuple(rng.integers(L, size=2)), tuple(size))
        for _ in range(n_configs):
            spins = rng.choice([-1, 1], size=g.n_cubes)
            if not membrane_identity_check(spins, mem, g):
                return False, f"identity fails for {mem.to_dict()}"
        if len(corner_set(mem, g)) % 2:
            return False, "odd corner count"
    return True, f"{n_configs * n_membranes} configurations"


def run_all(quick: bool = False):
    checks = [
        ("degeneracy", lambda: check_degeneracy((2, 3) if quick else (2, 3, 4, 5))),
        ("partition-duality", check_partition_duality),
        ("plaquette-map", check_plaquette_map),
        ("global-entanglement", check_global_entanglement),
        ("fidelity-law", check_fidelity_law),
        ("mc-energy", lambda: check_mc_energy(sweeps=20_000 if quick else 100_000)),
        ("mc-stationary", lambda: check_stationary(sweeps=500)),
        ("membrane-identity", lambda: check_membrane_identity(n_configs=50 if quick else 200)),
    ]
    results = []
    for name, fn in checks:
        t = time.perf_counter()
        ok, detail = fn()
        results.append((name, bool(ok), detail, time.perf_counter() - t))
    return results
