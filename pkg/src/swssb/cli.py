"""Command-line front end.

Settings come from an optional YAML/JSON config file and are overridden by
flags.  Every CSV written starts with ``#`` lines carrying the format tag
and the resolved configuration, so outputs are self-describing.  Worker
count and output paths are deliberately left out of that record: they do
not change results.

Exit codes: 0 success, 1 invalid configuration, 2 failed check, 3 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from . import decoherence as dec
from . import protocol as proto
from . import theory
from .datafile import FORMAT_TAG, load_dataset, save_dataset
from .errors import ConvergenceError, DimensionError
from .quantum_core import (
    DensityMatrix,
    ModelParams,
    conjugate_by,
    energy,
    ground_state,
    overlap,
    parity_expectation,
    purity,
)

CSV_FORMAT = "swssb-csv/1"
EXIT_OK, EXIT_VALIDATION, EXIT_CHECK, EXIT_IO = 0, 1, 2, 3
RATIO_CAVEAT = 0.5


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    n_qubits: int = 4
    g: float = 10.0
    mu: float = 0.3
    boundary: str = "open"
    n_rounds: int = 100_000
    shots_rho: int = 2
    shots_tilde: int = 1
    pair: tuple[int, int] | None = None
    seed: int = 0
    engine: str = "auto"
    g_values: list[float] = field(default_factory=list)
    mu_values: list[float] = field(default_factory=list)
    kl_smoothing: float = 0.5
    theory_size: int = theory.DEFAULT_CHAIN
    out: str | None = None
    dataset: str | None = None
    workers: int | None = None

    def model(self) -> ModelParams:
        return ModelParams(self.n_qubits, self.g, self.mu, self.boundary)

    def campaign(self) -> proto.CampaignConfig:
        return proto.CampaignConfig(
            self.n_rounds, self.shots_rho, self.shots_tilde, self.pair, self.seed, self.engine
        )

    def provenance(self) -> dict:
        record = asdict(self)
        for key in ("out", "dataset", "workers"):
            record.pop(key)
        return record


_FILE_KEYS = {
    "model": {"n_qubits", "g", "mu", "boundary"},
    "campaign": {"n_rounds", "shots_rho", "shots_tilde", "pair", "seed", "engine"},
    "scan": {"g_values", "mu_values", "kl_smoothing"},
    "theory": {"theory_size"},
    "output": {"out", "dataset"},
}


def load_config_file(path) -> dict:
    """Flatten a sectioned config file into RunConfig field names."""
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    flat = {}
    for section, values in raw.items():
        allowed = _FILE_KEYS.get(section)
        if allowed is None:
            raise ConfigError(f"unknown config section {section!r}")
        for key, value in (values or {}).items():
            name = "theory_size" if (section, key) == ("theory", "size") else key
            if name not in allowed:
                raise ConfigError(f"unknown key {section}.{key}")
            flat[name] = value
    return flat


def _float_list(text: str) -> list[float]:
    """Parse '1,2,5' or 'start:stop:count' (inclusive linspace)."""
    if ":" in text:
        start, stop, count = text.split(":")
        return [float(x) for x in np.linspace(float(start), float(stop), int(count))]
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swssb", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON config file")
    common.add_argument("--n", dest="n_qubits", type=int)
    common.add_argument("--g", type=float)
    common.add_argument("--mu", type=float)
    common.add_argument("--boundary", choices=["open", "periodic"])
    common.add_argument("--rounds", dest="n_rounds", type=int)
    common.add_argument("--shots-rho", type=int)
    common.add_argument("--shots-tilde", type=int)
    common.add_argument("--pair", type=int, nargs=2, metavar=("J", "K"))
    common.add_argument("--seed", type=int)
    common.add_argument("--engine", choices=["auto", "table", "statevector"])
    common.add_argument("--g-values", type=_float_list)
    common.add_argument("--mu-values", type=_float_list)
    common.add_argument("--smoothing", dest="kl_smoothing", type=float)
    common.add_argument("--size", dest="theory_size", type=int)
    common.add_argument("--out", help="CSV output path (stdout if omitted)")
    common.add_argument("--dataset", help="dataset file to write (campaign) or read (estimate)")
    common.add_argument("--workers", type=int, help=f"worker processes (default ${proto.WORKERS_ENV} or 1)")
    for name, text in [
        ("ground", "ground state amplitudes of the Ising chain"),
        ("campaign", "simulate a measurement campaign and estimate P_I, P_ZZ"),
        ("estimate", "re-estimate P_I, P_ZZ from a dataset file"),
        ("kl-scan", "KL divergence between Hamming distributions over a (g, mu) grid"),
        ("boundary", "critical mu_c(g) from free-fermion correlators"),
        ("oracle", "run the exact cross-checks"),
    ]:
        sub.add_parser(name, parents=[common], help=text)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = load_config_file(args.config) if args.config else {}
    for key in RunConfig.__dataclass_fields__:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if values.get("pair") is not None:
        values["pair"] = tuple(values["pair"])
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _write_csv(cfg: RunConfig, command: str, columns, rows) -> None:
    buf = io.StringIO()
    buf.write(f"# format: {CSV_FORMAT}\n# command: {command}\n")
    buf.write("# config: " + json.dumps(cfg.provenance(), sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    if cfg.out:
        Path(cfg.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def cmd_ground(cfg: RunConfig) -> int:
    params = cfg.model()
    psi = ground_state(params)
    rows = []
    for idx, (amp, prob) in enumerate(zip(psi.amplitudes, psi.probabilities)):
        rows.append([idx, format(idx, f"0{params.n_qubits}b"), _fmt(amp.real), _fmt(amp.imag), _fmt(prob)])
    _write_csv(cfg, "ground", ["index", "bits", "amp_re", "amp_im", "probability"], rows)
    print(f"energy={energy(psi, params)!r} parity={parity_expectation(psi)!r}", file=sys.stderr)
    return EXIT_OK


CAMPAIGN_COLUMNS = [
    "N", "g", "mu", "j", "k", "N_a", "P_I", "SE_I", "P_ZZ", "SE_ZZ", "C2_hat", "C2_caveat",
    "P_I_exact", "P_ZZ_exact", "seed", "format_version",
]


def _exact_pair(params: ModelParams, pair):
    if params.n_qubits > dec.CHANNEL_LIMIT:
        return None, None
    rho = dec.apply_channel_exact(DensityMatrix.from_state(ground_state(params)), params)
    return purity(rho), overlap(rho, conjugate_by(rho, pair))


def campaign_row(dataset: proto.MeasurementDataset) -> list:
    params, config = dataset.params, dataset.config
    j, k = config.resolved_pair(params.n_qubits)
    p_i = proto.estimate_purity(dataset)
    p_zz = proto.estimate_overlap(dataset)
    ratio = p_zz.estimate / p_i.estimate if p_i.estimate != 0 else float("nan")
    caveat = int(not p_i.estimate > 0 or p_i.std_error / p_i.estimate > RATIO_CAVEAT)
    exact_i, exact_zz = _exact_pair(params, (j, k))
    return [
        params.n_qubits, params.g, params.mu, j, k, len(dataset),
        p_i.estimate, p_i.std_error, p_zz.estimate, p_zz.std_error, ratio, caveat,
        exact_i, exact_zz, config.seed, FORMAT_TAG,
    ]


def cmd_campaign(cfg: RunConfig) -> int:
    params, config = cfg.model(), cfg.campaign()
    dataset = proto.run_campaign(params, config, ground_state(params), workers=cfg.workers)
    if cfg.dataset:
        save_dataset(dataset, cfg.dataset)
    _write_csv(cfg, "campaign", CAMPAIGN_COLUMNS, [[_fmt(x) for x in campaign_row(dataset)]])
    return EXIT_OK


def cmd_estimate(cfg: RunConfig) -> int:
    if not cfg.dataset:
        raise ConfigError("estimate needs --dataset")
    dataset = load_dataset(cfg.dataset)
    _write_csv(cfg, "estimate", CAMPAIGN_COLUMNS, [[_fmt(x) for x in campaign_row(dataset)]])
    return EXIT_OK


def point_seed(master: int, index: int) -> int:
    """Seed of grid point ``index``, independent of how the grid is executed."""
    return int(np.random.SeedSequence(master, spawn_key=(index,)).generate_state(1)[0])


KL_COLUMNS = ["g", "mu", "N", "N_a", "S_KL", "P_I", "SE_I", "P_ZZ", "SE_ZZ", "smoothing", "seed"]


def kl_point(cfg: RunConfig, g: float, mu: float, seed: int, ground=None) -> list:
    params = ModelParams(cfg.n_qubits, g, mu, cfg.boundary)
    config = replace(cfg.campaign(), seed=seed)
    psi = ground if ground is not None else ground_state(params)
    dataset = proto.run_campaign(params, config, psi, workers=cfg.workers)
    p_hist = proto.hamming_histogram(dataset, "purity_pairs")
    q_hist = proto.hamming_histogram(dataset, "cross_pairs")
    kl = proto.kl_divergence(p_hist, q_hist, cfg.kl_smoothing)
    p_i, p_zz = proto.estimate_purity(dataset), proto.estimate_overlap(dataset)
    return [g, mu, cfg.n_qubits, cfg.n_rounds, kl, p_i.estimate, p_i.std_error,
            p_zz.estimate, p_zz.std_error, cfg.kl_smoothing, seed]


def cmd_kl_scan(cfg: RunConfig) -> int:
    if not cfg.g_values or not cfg.mu_values:
        raise ConfigError("kl-scan needs non-empty g_values and mu_values")
    rows = []
    index = 0
    for g in cfg.g_values:
        psi = ground_state(ModelParams(cfg.n_qubits, g, 0.0, cfg.boundary))
        for mu in cfg.mu_values:
            rows.append([_fmt(x) for x in kl_point(cfg, g, mu, point_seed(cfg.seed, index), psi)])
            index += 1
    _write_csv(cfg, "kl-scan", KL_COLUMNS, rows)
    return EXIT_OK


def _boundary_point(args):
    g, size = args
    return theory.critical_mu(theory.correlator_table(g, size=size))


def cmd_boundary(cfg: RunConfig) -> int:
    if not cfg.g_values:
        raise ConfigError("boundary needs a non-empty g grid")
    grid = [float(g) for g in cfg.g_values]
    if any(g <= 1 for g in grid):
        raise ConfigError("boundary needs every g > 1")
    workers = cfg.workers or proto.default_workers()
    tasks = [(g, cfg.theory_size) for g in grid]
    if workers > 1 and len(grid) > 1:
        with ProcessPoolExecutor(workers) as pool:
            mus = list(pool.map(_boundary_point, tasks))
    else:
        mus = [_boundary_point(t) for t in tasks]
    _write_csv(cfg, "boundary", ["g", "mu_c"], [[_fmt(g), _fmt(m)] for g, m in zip(grid, mus)])
    return EXIT_OK


def oracle_checks(cfg: RunConfig, rng_seed: int | None = None):
    """Yield (name, residual, tolerance) for every exact cross-check."""
    n, mu = cfg.n_qubits, cfg.mu
    if n > dec.SWAP_LIMIT:
        raise DimensionError(f"oracle checks need N <= {dec.SWAP_LIMIT} (swap operator limit), got {n}")
    if n < 2:
        raise ConfigError("oracle checks need N >= 2")
    j, k = cfg.pair or (1, n)
    params = cfg.model()
    rho = dec.apply_channel_exact(DensityMatrix.from_state(ground_state(params)), params)
    tilde = conjugate_by(rho, (j, k))

    n_ex = min(n, proto.EXHAUSTIVE_LIMIT)
    small = ModelParams(n_ex, cfg.g, min(mu, n_ex), cfg.boundary)
    rho_s = dec.apply_channel_exact(DensityMatrix.from_state(ground_state(small)), small)
    tilde_s = conjugate_by(rho_s, (1, n_ex))
    yield "exhaustive: tr[rho^2]", abs(proto.exhaustive_expectation(rho_s, rho_s) - purity(rho_s)), 1e-10
    yield "exhaustive: tr[rho rho~]", abs(proto.exhaustive_expectation(rho_s, tilde_s) - overlap(rho_s, tilde_s)), 1e-10
    mix = DensityMatrix(n_ex, (rho_s.entries + tilde_s.entries) / 2)
    linear = purity(rho_s) / 4 + purity(tilde_s) / 4 + overlap(rho_s, tilde_s) / 2
    yield "exhaustive: linearity", abs(proto.exhaustive_expectation(mix, mix) - linear), 1e-10

    yield "swap: tr[V rho x rho]", abs(dec.swap_overlap(rho, rho) - purity(rho)), 1e-10
    yield "swap: tr[V rho x rho~]", abs(dec.swap_overlap(rho, tilde) - overlap(rho, tilde)), 1e-10

    plus = DensityMatrix.from_state(theory.StateVector.plus_state(n))
    dense = dec.averaged_renyi2_exact(dec.apply_channel_exact(plus, ModelParams(n, np.inf, mu)))
    if mu < n:
        yield "closed form g->inf vs dense channel", abs(theory.c2_exact_g_inf(n, mu) - dense), 1e-10
    if mu < n and n <= theory.IDENTITY_LIMIT:
        lhs, rhs = theory.verify_order_parameter_identity(n, mu)
        yield "order-parameter derivative identity", abs(lhs - rhs), 1e-6

    ff = theory.correlator_table(cfg.g, n - 1, size=n, boundary=cfg.boundary).values
    ed = theory.correlator_table(cfg.g, n - 1, size=n, method="exact_diag", boundary=cfg.boundary).values
    yield "free fermion vs exact diag <ZZ>", float(np.max(np.abs(ff - ed))), 1e-8


def cmd_oracle(cfg: RunConfig) -> int:
    rows = []
    failed = False
    for name, residual, tol in oracle_checks(cfg):
        ok = residual <= tol
        failed |= not ok
        print(f"{'PASS' if ok else 'FAIL'}  {name}: residual={residual:.3e} tol={tol:.0e}", file=sys.stderr)
        rows.append([name, _fmt(float(residual)), _fmt(tol), int(ok)])
    _write_csv(cfg, "oracle", ["check", "residual", "tolerance", "passed"], rows)
    return EXIT_CHECK if failed else EXIT_OK


COMMANDS = {
    "ground": cmd_ground,
    "campaign": cmd_campaign,
    "estimate": cmd_estimate,
    "kl-scan": cmd_kl_scan,
    "boundary": cmd_boundary,
    "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, DimensionError, ValueError, TypeError, yaml.YAMLError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConvergenceError as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
