"""Experiment runner: config parsing, seeding, study drivers, CSV/JSON output.

Five subcommands: construct, verify-scheme, simulate-parallel, simulate-harq,
simulate-mimo. Configuration is an INI file with sections [code], [channel],
[scheme], [run], [output]; every key is validated against the subcommand's
schema and unknown keys are rejected with the offending line number.
--override section.key=value wins over the file; --seed/--trials/--out win
over both. Exit codes: 0 success, 2 invalid configuration, 3 infeasible
scheme or failed verification.

Result files: <experiment>.csv with the fixed header
experiment,seed,params_hash,trial,metric,value (trial -1 rows are run-level
aggregates) and <experiment>_summary.json with parameters, headline metrics,
git revision, and wall time. Column meanings per subcommand are documented
in docs/cli.md. With equal configuration and seed the CSV is byte-identical
across runs; the JSON is too except wall_time_s and git_rev.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import math
import subprocess
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .channels import FadingProcess, biawgn_capacity, invert_biawgn_capacity
from .codec import (
    biawgn_family,
    depths_from_capacities,
    frames_to_hex,
    joint_decode,
    make_parallel_config,
    super_encode,
    transmit,
)
from .construction import build_nested_tiers, compute_K, save_profile, save_tier_plan
from .errors import ConfigurationError, DomainError, PipelineOrderError
from .scheduling import make_ordering, scheme_to_text, verify_prefix_rank
from .applications.harq import (
    HarqPolicy,
    harq_oracle,
    harq_run,
    make_harq_context,
    median_oneshot_capacity,
)
from .applications.mimo import MimoLink, mimo_capacity, mimo_run

__all__ = ["main"]


class ConfigError(Exception):
    """Invalid configuration; carries file/line diagnostics when known."""


# ---------------------------------------------------------------------------
# configuration schema


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "1", "yes", "on"):
        return True
    if v in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_float_list(s: str) -> List[float]:
    return [float(tok) for tok in s.split(",") if tok.strip()]


_PARSERS: Dict[str, Callable] = {
    "int": int,
    "float": float,
    "bool": _parse_bool,
    "str": str,
    "floats": _parse_float_list,
}

# key -> (type name, default). None default means "must come from config
# when the subcommand uses it"; resolution happens in the drivers.
_KEYSPEC: Dict[Tuple[str, str], Tuple[str, object]] = {
    ("code", "n"): ("int", 1024),
    ("code", "Q"): ("int", 4),
    ("code", "T"): ("int", 0),  # 0 = derive from the rate
    ("code", "rate"): ("float", None),
    ("code", "margin"): ("floats", [0.2]),
    ("code", "design_margin"): ("float", 0.15),
    ("channel", "sigma"): ("floats", None),
    ("channel", "snr_db"): ("float", None),
    ("channel", "fading"): ("str", "none"),
    ("channel", "labeling"): ("str", "natural"),
    ("scheme", "M"): ("int", 2),
    ("scheme", "broken"): ("bool", False),
    ("run", "trials"): ("int", 100),
    ("run", "seed"): ("int", 0),
    ("run", "horizon_blocks"): ("int", 8),
    ("run", "workers"): ("int", 1),
    ("run", "mode"): ("str", "genie"),
    ("output", "path"): ("str", "results"),
    ("output", "dump_frames"): ("bool", False),
}

_ALLOWED: Dict[str, set] = {
    "construct": {
        ("code", "n"), ("code", "Q"), ("code", "rate"), ("code", "design_margin"),
        ("output", "path"),
    },
    "verify-scheme": {
        ("scheme", "M"), ("scheme", "broken"), ("code", "Q"), ("output", "path"),
    },
    "simulate-parallel": {
        ("code", "n"), ("code", "Q"), ("code", "margin"), ("code", "design_margin"),
        ("channel", "sigma"), ("channel", "fading"), ("channel", "labeling"),
        ("scheme", "M"),
        ("run", "trials"), ("run", "seed"), ("run", "horizon_blocks"), ("run", "workers"),
        ("output", "path"), ("output", "dump_frames"),
    },
    "simulate-harq": {
        ("code", "n"), ("code", "Q"), ("code", "rate"), ("code", "margin"),
        ("code", "design_margin"),
        ("channel", "sigma"), ("channel", "snr_db"), ("channel", "fading"),
        ("scheme", "M"),
        ("run", "trials"), ("run", "seed"), ("run", "horizon_blocks"), ("run", "workers"),
        ("output", "path"),
    },
    "simulate-mimo": {
        ("code", "n"), ("code", "Q"), ("code", "rate"),
        ("channel", "snr_db"),
        ("scheme", "M"),
        ("run", "trials"), ("run", "seed"), ("run", "horizon_blocks"),
        ("run", "workers"), ("run", "mode"),
        ("output", "path"),
    },
}


def _key_line_number(text: str, section: str, key: str) -> Optional[int]:
    """Line of `key` inside `[section]` in the raw config text, 1-based."""
    current = None
    for i, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip()
        elif current == section and "=" in stripped:
            if stripped.split("=", 1)[0].strip() == key:
                return i
    return None


def load_config(
    subcommand: str, path: Optional[str], overrides: Sequence[str]
) -> Dict[Tuple[str, str], object]:
    """Defaults, then the INI file, then --override pairs. Strict keys."""
    allowed = _ALLOWED[subcommand]
    values: Dict[Tuple[str, str], object] = {
        k: spec[1] for k, spec in _KEYSPEC.items() if k in allowed
    }

    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {path}")
        text = p.read_text()
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str  # [code] Q is case-sensitive
        try:
            parser.read_string(text, source=path)
        except configparser.Error as e:
            raise ConfigError(f"{path}: {e}") from e
        for section in parser.sections():
            for key in parser[section]:
                where = (section, key)
                line = _key_line_number(text, section, key)
                loc = f"{path}:{line}" if line else path
                if where not in _KEYSPEC:
                    raise ConfigError(f"{loc}: unknown key [{section}] {key}")
                if where not in allowed:
                    raise ConfigError(
                        f"{loc}: key [{section}] {key} does not apply to {subcommand}"
                    )
                typ = _KEYSPEC[where][0]
                try:
                    values[where] = _PARSERS[typ](parser[section][key])
                except ValueError as e:
                    raise ConfigError(f"{loc}: bad value for [{section}] {key}: {e}") from e

    for spec in overrides:
        if "=" not in spec or "." not in spec.split("=", 1)[0]:
            raise ConfigError(f"--override needs section.key=value, got {spec!r}")
        dotted, raw = spec.split("=", 1)
        section, key = dotted.split(".", 1)
        where = (section.strip(), key.strip())
        if where not in _KEYSPEC:
            raise ConfigError(f"--override: unknown key [{where[0]}] {where[1]}")
        if where not in allowed:
            raise ConfigError(
                f"--override: key [{where[0]}] {where[1]} does not apply to {subcommand}"
            )
        typ = _KEYSPEC[where][0]
        try:
            values[where] = _PARSERS[typ](raw)
        except ValueError as e:
            raise ConfigError(f"--override {spec!r}: {e}") from e

    return values


# ---------------------------------------------------------------------------
# result plumbing


def _params_dict(values: Dict[Tuple[str, str], object]) -> Dict[str, object]:
    return {f"{s}.{k}": v for (s, k), v in sorted(values.items())}


def _params_hash(params: Dict[str, object]) -> str:
    canon = json.dumps(params, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return repr(float(value))


class ResultWriter:
    """Accumulates (trial, metric, value) rows and writes CSV + JSON."""

    def __init__(self, experiment: str, seed: int, params: Dict[str, object], out: Path):
        self.experiment = experiment
        self.seed = seed
        self.params = params
        self.hash = _params_hash(params)
        self.out = out
        self.rows: List[Tuple[int, str, object]] = []
        self.metrics: Dict[str, object] = {}
        self._t0 = time.monotonic()

    def add(self, trial: int, metric: str, value) -> None:
        self.rows.append((trial, metric, value))

    def summary(self, metric: str, value) -> None:
        self.metrics[metric] = value
        self.rows.append((-1, metric, value))

    def flush(self) -> Tuple[Path, Path]:
        self.out.mkdir(parents=True, exist_ok=True)
        csv_path = self.out / f"{self.experiment}.csv"
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["experiment", "seed", "params_hash", "trial", "metric", "value"])
        for trial, metric, value in sorted(self.rows, key=lambda r: (r[0], r[1])):
            w.writerow([self.experiment, self.seed, self.hash, trial, metric, _fmt(value)])
        csv_path.write_text(buf.getvalue())

        summary = {
            "experiment": self.experiment,
            "seed": self.seed,
            "params": self.params,
            "params_hash": self.hash,
            "metrics": {k: (float(v) if isinstance(v, (np.floating, float)) else v)
                        for k, v in self.metrics.items()},
            "git_rev": _git_rev(),
            "wall_time_s": round(time.monotonic() - self._t0, 3),
        }
        json_path = self.out / f"{self.experiment}_summary.json"
        json_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        return csv_path, json_path


def _git_rev() -> str:
    try:
        r = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=10,
        )
        if r.returncode == 0:
            return r.stdout.strip()
    except OSError:
        pass
    return "unknown"


def _run_trials(
    trials: int, workers: int, seed: int, one: Callable[[int, np.random.SeedSequence], List]
) -> List:
    """Deterministic trial fan-out: child seeds by index, results sorted by
    trial index regardless of completion order."""
    children = np.random.SeedSequence(seed).spawn(trials)
    results: List = [None] * trials
    if workers <= 1:
        for t in range(trials):
            results[t] = one(t, children[t])
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futs = {pool.submit(one, t, children[t]): t for t in range(trials)}
            for fut, t in futs.items():
                results[t] = fut.result()
    return results


# ---------------------------------------------------------------------------
# drivers


def _cmd_construct(values, seed: int, out: Path) -> int:
    N = values[("code", "n")]
    Q = values[("code", "Q")]
    rate = values[("code", "rate")]
    if rate is None:
        raise ConfigError("construct needs [code] rate")
    if not 0 < rate < 1:
        raise ConfigError("construct covers the single-level family: rate in (0,1)")
    writer = ResultWriter("construct", seed, _params_dict(values), out)
    family = biawgn_family(Q, N, rate)
    plan = build_nested_tiers(family, compute_K(Q, family.info_sizes))
    out.mkdir(parents=True, exist_ok=True)
    for m, prof in enumerate(family.profiles, start=1):
        save_profile(prof, out / f"profile_m{m}.txt")
    save_tier_plan(plan, out / "tier_plan.txt")
    for m in range(1, Q + 1):
        writer.add(0, f"family_capacity[{m}]", family.capacities[m - 1])
        writer.add(0, f"tier_size[{m}]", len(plan.tiers[m - 1]))
    writer.summary("K", int(plan.K))
    writer.summary("N", N)
    csv_path, json_path = writer.flush()
    print(f"construct: K={plan.K} N={N} Q={Q} -> {csv_path} {json_path}")
    return 0


def _cmd_verify_scheme(values, seed: int, out: Path) -> int:
    M = values[("scheme", "M")]
    Q = values[("code", "Q")]
    broken = values[("scheme", "broken")]
    writer = ResultWriter("verify_scheme", seed, _params_dict(values), out)
    if broken:
        # duplicated-matrix scheme: every channel uses the identity
        from .scheduling import OrderingScheme

        eye = np.eye(Q, dtype=np.uint8)
        scheme = OrderingScheme(M=M, Q=Q, matrices=tuple(eye.copy() for _ in range(M)))
    else:
        scheme = make_ordering(M, Q, best_effort=(M >= 4))
    report = verify_prefix_rank(scheme)
    out.mkdir(parents=True, exist_ok=True)
    (out / "scheme.txt").write_text(scheme_to_text(scheme))
    writer.summary("prefix_rank_ok", bool(report.ok))
    writer.summary("num_checked", report.num_checked)
    if report.first_failure is not None:
        writer.summary("first_failure", ",".join(str(q) for q in report.first_failure))
    writer.flush()
    if report.ok:
        print(f"verify-scheme: pass ({report.num_checked} compositions, M={M}, Q={Q})")
        return 0
    print(
        f"verify-scheme: FAIL at composition {report.first_failure} "
        f"({report.num_checked} checked, M={M}, Q={Q})"
    )
    return 3


def _cmd_simulate_parallel(values, seed: int, trials: int, out: Path) -> int:
    N = values[("code", "n")]
    Q = values[("code", "Q")]
    margins = values[("code", "margin")]
    design_margin = values[("code", "design_margin")]
    sigmas = values[("channel", "sigma")]
    if sigmas is None:
        raise ConfigError("simulate-parallel needs [channel] sigma (comma list, one per channel)")
    M = values[("scheme", "M")]
    if len(sigmas) != M:
        raise ConfigError(f"[channel] sigma has {len(sigmas)} entries, [scheme] M={M}")
    if values[("channel", "fading")] != "none":
        raise ConfigError("simulate-parallel models static channels; fading must be 'none'")
    if values[("channel", "labeling")] != "natural":
        raise ConfigError("only natural labeling is implemented")
    horizon = values[("run", "horizon_blocks")]
    workers = values[("run", "workers")]
    caps = [biawgn_capacity(s) for s in sigmas]
    total = sum(caps)

    writer = ResultWriter("simulate_parallel", seed, _params_dict(values), out)
    writer.summary("sum_capacity", total)
    dumped = {}

    for delta in margins:
        if not 0 < delta < 1:
            raise ConfigError(f"margin values must be in (0,1), got {delta}")
        rate = (1.0 - delta) * total
        config = make_parallel_config(
            M=M, Q=Q, N=N, sum_rate=rate, design_margin=design_margin
        )
        scheme = make_ordering(M, Q, best_effort=(M >= 4))
        depths = depths_from_capacities(caps, rate, Q)
        tag = f"delta={delta:g}"

        def one(trial: int, child: np.random.SeedSequence):
            s_msg, s_noise = child.spawn(2)
            msgs = np.random.default_rng(s_msg).integers(
                0, 2, size=(horizon, config.K), dtype=np.uint8
            )
            frames = super_encode(msgs, config, scheme)
            obs = transmit(frames, sigmas, seed=s_noise)
            res = joint_decode(
                obs, sigmas, caps, config, scheme, horizon=horizon, depths=depths
            )
            bad = (~res.solved) | (res.messages != msgs).any(axis=1)
            if trial == 0 and values[("output", "dump_frames")] and tag not in dumped:
                dumped[tag] = frames_to_hex(frames)
            return int(bad.sum())

        errs = _run_trials(trials, workers, seed, one)
        for t, e in enumerate(errs):
            writer.add(t, f"block_errors[{tag}]", e)
        bler = sum(errs) / (trials * horizon)
        writer.summary(f"bler[{tag}]", bler)
        writer.summary(f"depths[{tag}]", ",".join(str(q) for q in depths))

    csv_path, json_path = writer.flush()
    if dumped:
        for tag, text in dumped.items():
            (out / f"frames_{tag.replace('=', '_')}.txt").write_text(text)
    blers = [writer.metrics[f"bler[delta={d:g}]"] for d in margins]
    print(f"simulate-parallel: BLER {blers} at margins {list(margins)} -> {csv_path}")
    return 0


def _cmd_simulate_harq(values, seed: int, trials: int, out: Path) -> int:
    N = values[("code", "n")]
    Q = values[("code", "Q")]
    margin = values[("code", "margin")]
    if len(margin) != 1:
        raise ConfigError("simulate-harq takes a single margin value")
    delta = margin[0]
    M = values[("scheme", "M")]
    if values[("channel", "fading")] != "rayleigh":
        raise ConfigError("simulate-harq models Rayleigh block fading; set fading = rayleigh")
    sigma = values[("channel", "sigma")]
    snr_db = values[("channel", "snr_db")]
    if sigma is not None and snr_db is not None:
        raise ConfigError("give [channel] sigma or snr_db, not both")
    if sigma is not None:
        if len(sigma) != 1:
            raise ConfigError("HARQ uses one base channel; sigma must be a single value")
        sigma0 = sigma[0]
    elif snr_db is not None:
        sigma0 = math.sqrt(1.0 / (10.0 ** (snr_db / 10.0)))
    else:
        sigma0 = 0.466
    rate = values[("code", "rate")]
    if rate is None:
        rate = median_oneshot_capacity(sigma0)
    horizon = values[("run", "horizon_blocks")]
    workers = values[("run", "workers")]

    policy = HarqPolicy(
        rate=rate, max_transmissions=M, margin=delta, N=N, Q=Q,
        sigma0=sigma0, horizon=horizon,
    )
    config, scheme = make_harq_context(policy)
    fading = FadingProcess()
    writer = ResultWriter("simulate_harq", seed, _params_dict(values), out)

    def one(trial: int, child: np.random.SeedSequence):
        res = harq_run(policy, fading, child, config=config, scheme=scheme)
        ok, m_star = harq_oracle(policy.scheme_rate, res.realized_capacities)
        return res, ok, m_star

    results = _run_trials(trials, workers, seed, one)
    agree = 0
    tput = 0.0
    tput_oracle = 0.0
    for t, (res, ok, m_star) in enumerate(results):
        writer.add(t, "success", res.success)
        writer.add(t, "transmissions", res.transmissions)
        writer.add(t, "throughput", res.throughput)
        writer.add(t, "oracle_success", ok)
        writer.add(t, "oracle_transmissions", m_star)
        agree += int(res.success == ok)
        tput += res.throughput
        tput_oracle += (policy.rate / m_star) if ok else 0.0
    writer.summary("agreement", agree / trials)
    writer.summary("throughput", tput / trials)
    writer.summary("oracle_throughput", tput_oracle / trials)
    writer.summary("rate", rate)
    writer.summary("scheme_rate", policy.scheme_rate)
    csv_path, _ = writer.flush()
    print(
        f"simulate-harq: agreement {agree / trials:.3f}, "
        f"throughput {tput / trials:.4f} vs oracle {tput_oracle / trials:.4f} -> {csv_path}"
    )
    return 0


def _cmd_simulate_mimo(values, seed: int, trials: int, out: Path) -> int:
    layers = values[("scheme", "M")]
    snr_db = values[("channel", "snr_db")]
    if snr_db is None:
        snr_db = 10.0
    rho = 10.0 ** (snr_db / 10.0)
    frac = values[("code", "rate")]
    if frac is None:
        frac = 0.3
    if not 0 < frac <= 1:
        raise ConfigError("[code] rate is the feedback fraction of capacity, in (0,1]")
    N = values[("code", "n")]
    Q = values[("code", "Q")]
    mode = values[("run", "mode")]
    if mode not in ("genie", "decoded"):
        raise ConfigError("[run] mode must be genie or decoded")
    horizon = values[("run", "horizon_blocks")]
    workers = values[("run", "workers")]

    writer = ResultWriter("simulate_mimo", seed, _params_dict(values), out)

    def one(trial: int, child: np.random.SeedSequence):
        rng = np.random.default_rng(child)
        H = (rng.normal(size=(layers, layers)) + 1j * rng.normal(size=(layers, layers)))
        H /= math.sqrt(2.0)
        link = MimoLink(H, snr=rho)
        cap = mimo_capacity(link)
        res = mimo_run(
            link, sum_rate_feedback=frac * cap,
            seed=rng.integers(0, 2**63 - 1), horizon=horizon, Q=Q, N=N, mode=mode,
        )
        identity_err = abs(
            sum(math.log2(1.0 + g) for g in res.report.gammas) - cap
        )
        return cap, identity_err, int(res.correct.sum()), res.correct.size, res.outage

    results = _run_trials(trials, workers, seed, one)
    good = 0
    total = 0
    worst_identity = 0.0
    outages = 0
    for t, (cap, ierr, ngood, nblk, outage) in enumerate(results):
        writer.add(t, "capacity", cap)
        writer.add(t, "rate_identity_error", ierr)
        writer.add(t, "blocks_correct", ngood)
        writer.add(t, "blocks_total", nblk)
        writer.add(t, "outage", outage)
        good += ngood
        total += nblk
        worst_identity = max(worst_identity, ierr)
        outages += int(outage)
    writer.summary("block_error_rate", 1.0 - good / total)
    writer.summary("max_rate_identity_error", worst_identity)
    writer.summary("outage_fraction", outages / trials)
    csv_path, _ = writer.flush()
    print(
        f"simulate-mimo: BLER {1.0 - good / total:.4f}, max identity error "
        f"{worst_identity:.2e} over {trials} trials -> {csv_path}"
    )
    return 0


# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="parapolar",
        description="Simulation drivers for staircase polar coding over parallel channels.",
    )
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name in (
        "construct", "verify-scheme", "simulate-parallel", "simulate-harq", "simulate-mimo"
    ):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="INI configuration file")
        sp.add_argument("--seed", type=int, help="base RNG seed (overrides [run] seed)")
        sp.add_argument("--trials", type=int, help="trial count (overrides [run] trials)")
        sp.add_argument("--out", help="output directory (overrides [output] path)")
        sp.add_argument(
            "--override", action="append", default=[],
            metavar="SECTION.KEY=VALUE", help="set one config key; repeatable",
        )
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        values = load_config(args.subcommand, args.config, args.override)
        if args.seed is not None:
            if ("run", "seed") in values:
                values[("run", "seed")] = args.seed
            seed = args.seed
        else:
            seed = values.get(("run", "seed"), 0)
        if args.trials is not None and ("run", "trials") in values:
            values[("run", "trials")] = args.trials
        trials = values.get(("run", "trials"), 1)
        if trials < 1:
            raise ConfigError("[run] trials must be >= 1")
        out = Path(args.out) if args.out else Path(values[("output", "path")])

        if args.subcommand == "construct":
            return _cmd_construct(values, seed, out)
        if args.subcommand == "verify-scheme":
            return _cmd_verify_scheme(values, seed, out)
        if args.subcommand == "simulate-parallel":
            return _cmd_simulate_parallel(values, seed, trials, out)
        if args.subcommand == "simulate-harq":
            return _cmd_simulate_harq(values, seed, trials, out)
        if args.subcommand == "simulate-mimo":
            return _cmd_simulate_mimo(values, seed, trials, out)
        raise ConfigError(f"unknown subcommand {args.subcommand!r}")
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (DomainError, ConfigurationError, PipelineOrderError) as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
