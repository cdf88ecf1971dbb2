"""Command-line entry point: ``python -m recdesign <command> ...``.

Exit codes: 0 success, 2 validation failure, 1 any other error.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from pathlib import Path

from . import experiment, replication
from .agents import build_model
from .core import LossSpec, Recommendation
from .decomposition import compliance_response_effect, decompose, decomposition_csv, pareto_front, triage_effect, response_effect
from .estimation import DecisionLog, LogFormatError, PolicyClass, cost_weighted_erm, fit_mistake_stats, plugin_policy
from .lfm import (
    ComplianceAssumptions,
    MistakeStats,
    adversary_excess,
    kappa_thresholds,
    lfm_policy,
    minimax_grid_oracle,
    mistake_stats,
    sweep,
    worst_case_excess,
)
from .policies import BaselineJoint, CapExceeded, Policy, SupportMismatch, enumerate_policies

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib


class CliError(Exception):
    prefix = "error"
    code = 1


class ConfigError(CliError):
    prefix = "config error"


class InputError(CliError):
    prefix = "io error"


class ValidationFailure(CliError):
    prefix = "validation failure"
    code = 2


class UsageError(CliError):
    prefix = "usage error"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# argument helpers


def _costs(text: str) -> LossSpec:
    try:
        return LossSpec.parse(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _nonneg(text: str) -> float:
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror}") from None


def _load_policy(text_or_path: str, support: tuple) -> Policy:
    """A code string (``N00HH`` or ``N|none|H``), a JSON object, or a path to one."""
    if Path(text_or_path).is_file():
        text_or_path = _read(text_or_path)
    s = text_or_path.strip()
    try:
        if s.startswith("{"):
            obj = json.loads(s)
            if "policy" in obj:
                obj = obj["policy"]
            p = Policy.from_json(obj)
            if set(p.support) != set(support):
                raise ValidationFailure(f"policy support {list(p.support)} != {list(support)}")
            return Policy(tuple(support), tuple(p[x] for x in support))
        return Policy.from_codes(support, s)
    except (ValueError, json.JSONDecodeError) as e:
        if isinstance(e, ValidationFailure):
            raise
        raise ConfigError(f"bad policy {text_or_path!r}: {e}") from None


def _load_allow_list(path: str, support: tuple) -> list[Policy]:
    try:
        obj = json.loads(_read(path))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    if isinstance(obj, dict):
        obj = obj.get("policies", [])
    if not obj:
        raise ConfigError(f"{path}: empty policy allow-list")
    return [_load_policy(p if isinstance(p, str) else json.dumps(p), support) for p in obj]


def _population(arg: str) -> experiment.PopulationSpec:
    if arg == "default":
        return experiment.default_population()
    try:
        return experiment.PopulationSpec.from_file(_existing(arg))
    except (ValueError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"{arg}: {e}") from None


def _existing(path: str) -> str:
    if not Path(path).is_file():
        raise InputError(f"no such file: {path}")
    return path


def _decision_log(path: str) -> DecisionLog:
    try:
        return DecisionLog.from_csv(_read(path))
    except LogFormatError as e:
        raise ValidationFailure(f"{path}: {e}") from None


def _stats_from_args(args) -> tuple[MistakeStats, BaselineJoint | None]:
    if args.baseline == "table6":
        base = experiment.table6_baseline()
        return mistake_stats(base), base
    log = _decision_log(args.baseline)
    stats = fit_mistake_stats(log, args.smoothing)
    return stats, stats_to_baseline(stats)


def stats_to_baseline(stats: MistakeStats) -> BaselineJoint | None:
    rows = {}
    for x, s in stats.items():
        if s.p == 0:
            return None
        rows[x] = (s.p, s.h, s.m_N if s.m_N is not None else 0.0, s.m_H if s.m_H is not None else 0.0)
    return BaselineJoint.from_rates(rows)


def _model(args, pop_spec, spec, which: str = "active"):
    dist = pop_spec.to_distribution()
    compliance = args.compliance
    try:
        compliance = float(compliance)
    except ValueError:
        pass
    active = getattr(args, which)
    if active is None:
        active = args.active
    try:
        active = float(active)
    except ValueError:
        pass
    desc = {"compliance": compliance, "active": active}
    if args.ignored:
        desc["ignored"] = [s.strip() for s in args.ignored.split(",") if s.strip()]
    try:
        return build_model(desc, dist, spec)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def _emit(args, payload: str):
    if getattr(args, "out", None):
        try:
            Path(args.out).write_text(payload, encoding="utf-8")
        except OSError as e:
            raise InputError(f"cannot write {args.out}: {e.strerror}") from None
    else:
        sys.stdout.write(payload)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=replication._json_default) + "\n"


def _stats_json(stats: MistakeStats) -> dict:
    return stats.as_dict()


# ---------------------------------------------------------------------------
# commands


def cmd_eval(args):
    pop = _population(args.population)
    spec = args.costs
    dist = pop.to_distribution()
    policy = _load_policy(args.policy, dist.support)
    model = _model(args, pop, spec)
    baseline = _model(args, pop, spec, "baseline_active")
    rep = decompose(policy, dist, model, baseline, spec)
    ign, shift = compliance_response_effect(policy, dist, model, baseline, spec)
    out = {
        "policy": policy.as_dict(),
        "costs": [spec.c_I, spec.c_II],
        "total": rep.total,
        "te": rep.te,
        "re": rep.re,
        "re_ignore": ign,
        "re_active_shift": shift,
        "per_x": [{"x": str(x), "te": te, "re": re} for x, te, re in rep.per_x],
    }
    _emit(args, _json(out))


def cmd_decompose(args):
    pop = _population(args.population)
    spec = args.costs
    dist = pop.to_distribution()
    model = _model(args, pop, spec)
    baseline = _model(args, pop, spec, "baseline_active")
    if args.allow_list:
        candidates = _load_allow_list(args.allow_list, dist.support)
    else:
        candidates = list(enumerate_policies(dist.support))
    base = BaselineJoint.from_population(dist, baseline)
    entries = [(p, triage_effect(p, base, spec), response_effect(p, dist, model, baseline, spec)) for p in candidates]
    _emit(args, decomposition_csv(entries))


def cmd_lfm(args):
    stats, _ = _stats_from_args(args)
    policy = lfm_policy(stats, args.costs, args.kappa)
    _emit(args, _json({"policy": policy.as_dict(), "kappa": args.kappa, "stats": _stats_json(stats)}))


def cmd_sweep(args):
    stats, _ = _stats_from_args(args)
    if not 0 <= args.kappa_min < args.kappa_max:
        raise ConfigError("need 0 <= --kappa-min < --kappa-max")
    bands = sweep(stats, args.costs, args.kappa_min, args.kappa_max)
    lines = ["x,band_start_kappa,band_end_kappa,recommendation"]
    lines += [f"{b.x},{b.start!r},{b.end!r},{b.rec.code}" for b in bands]
    if args.compare and args.baseline == "table6":
        for row in experiment.fig7_comparison(stats, args.costs, args.kappa_max):
            if row["discrepancy"]:
                print(
                    f"note: {row['x']} {row['rec']} band starts at {row['derived']!r}; published {row['published']}",
                    file=sys.stderr,
                )
    _emit(args, "\n".join(lines) + "\n")


def cmd_oracle(args):
    stats, base = _stats_from_args(args)
    if base is None:
        raise ValidationFailure("baseline has characteristic values with zero mass")
    a = ComplianceAssumptions(args.kappa, args.epsilon)
    allowed = _load_allow_list(args.allow_list, base.support) if args.allow_list else None
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            res = minimax_grid_oracle(base, args.costs, a, args.grid_step, allowed)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
    except CapExceeded as e:
        raise ValidationFailure(str(e)) from None
    out = {
        "kappa": a.kappa,
        "epsilon": a.epsilon,
        "grid_step": args.grid_step,
        "baseline_loss": res.baseline_loss,
        "minimax_excess": res.value,
        "argmin": [p.as_dict() for p in res.argmin],
        "policies": [
            {
                "policy": p.as_dict(),
                "grid_worst_case": v,
                "bound": worst_case_excess(p, stats, args.costs, a) if a.kappa > 0 else None,
                "exact_worst_case": adversary_excess(p, stats, args.costs, a),
            }
            for p, v in res.per_policy
        ],
    }
    _emit(args, _json(out))


def cmd_fit(args):
    log = _decision_log(_existing(args.log))
    stats = fit_mistake_stats(log, args.smoothing)
    policy = plugin_policy(stats, args.costs, args.kappa)
    _emit(args, _json({"stats": _stats_json(stats), "policy": policy.as_dict(), "kappa": args.kappa, "smoothing": args.smoothing}))


def cmd_erm(args):
    log = _decision_log(_existing(args.log))
    cls = PolicyClass.explicit(_load_allow_list(args.allow_list, log.support)) if args.allow_list else PolicyClass()
    try:
        argmin, value = cost_weighted_erm(log, cls, args.costs, args.kappa)
    except CapExceeded as e:
        raise ValidationFailure(str(e)) from None
    _emit(args, _json({"argmin": [p.as_dict() for p in argmin], "objective": value, "kappa": args.kappa}))


def cmd_simulate(args):
    pop = _population(args.population)
    violations = experiment.validate_population(pop, args.costs)
    if violations:
        raise ValidationFailure("; ".join(violations))
    support = experiment.TYPES
    if args.policy:
        policy, name = _load_policy(args.policy, support), "custom"
    else:
        if args.treatment not in experiment.TREATMENTS:
            raise ConfigError(f"unknown treatment {args.treatment!r}; choose from {list(experiment.TREATMENTS)}")
        policy, name = experiment.TREATMENTS[args.treatment], args.treatment
    model = _model(args, pop, args.costs)
    t0 = time.perf_counter()
    records, summary = experiment.simulate_experiment(pop, policy, model, args.n_subjects, args.seed, name, args.threads)
    print(f"simulated {len(records)} decisions in {time.perf_counter() - t0:.2f}s", file=sys.stderr)
    if args.log_out:
        try:
            Path(args.log_out).write_text(experiment.write_subject_log(records), encoding="utf-8")
        except OSError as e:
            raise InputError(f"cannot write {args.log_out}: {e.strerror}") from None
    out = {
        "treatment": name,
        "policy": policy.as_dict(),
        "seed": args.seed,
        "summary": summary.as_dict(),
        "exact": experiment.exact_rates(pop, policy, model),
        "human_reference": experiment.HUMAN_TABLE5.get(name),
    }
    _emit(args, _json(out))


def cmd_ingest(args):
    try:
        _, summaries = experiment.ingest_subject_log(_read(_existing(args.log)), args.filter_column, args.seed)
    except ValueError as e:
        raise ValidationFailure(f"{args.log}: {e}") from None
    rows = []
    for key, s in summaries.items():
        treatment, flag = key if isinstance(key, tuple) else (key, None)
        rows.append({"treatment": treatment, "filter": flag, "summary": s.as_dict()})
    _emit(args, _json({"groups": rows}))


def cmd_population(args):
    if args.action == "validate":
        pop = _population(args.population)
        violations = experiment.validate_population(pop, args.costs)
        _emit(args, _json({"violations": violations, "valid": not violations}))
        if violations:
            return 2
    else:
        found = experiment.search_populations(require_bc_equivalent=args.bc_equivalent)
        _emit(args, _json({"count": len(found), "populations": found}))
    return 0


def cmd_replicate(args):
    t0 = time.perf_counter()
    report = replication.replicate_report(args.seed, args.threads)
    text = replication.report_json(report)
    if args.out:
        _emit(args, text)
    for c in report["criteria"]:
        print(f"criterion {c['id']:>2}: {'PASS' if c['passed'] else 'FAIL'}  {c['title']}", file=sys.stdout if args.out else sys.stderr)
    print(f"replicate finished in {time.perf_counter() - t0:.1f}s", file=sys.stderr)
    if not args.out:
        sys.stdout.write(text)
    return 0 if report["all_passed"] else 2


# ---------------------------------------------------------------------------


def _add_common(p, *, model=False, baseline=False, population=False, kappa=False):
    p.add_argument("--costs", type=_costs, default=LossSpec(), help="c_I,c_II (default 1,1)")
    p.add_argument("--out", help="write output here instead of stdout")
    if population:
        p.add_argument("--population", default="default", help="'default' or a TOML/JSON population file")
    if model:
        p.add_argument("--compliance", default="perfect", help="perfect | selective | <probability>")
        p.add_argument("--ignored", default=None, help="comma-separated private signals ignored under selective compliance")
        p.add_argument("--active", default="sophisticated", help="sophisticated | matching | random[:p] | <probability>")
        p.add_argument("--baseline-active", default=None, help="unassisted decision rule (default: same as --active)")
    if baseline:
        p.add_argument("--baseline", default="table6", help="'table6' or a decision-log CSV")
        p.add_argument("--smoothing", type=_nonneg, default=0.0)
    if kappa:
        p.add_argument("--kappa", type=_nonneg, default=1.0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="recdesign", description=__doc__)
    parser.add_argument("--config", help="TOML or JSON file whose keys mirror the command's flags")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("eval", help="expected loss and triage/response decomposition of one policy")
    _add_common(p, model=True, population=True)
    p.add_argument("--policy", required=True, help="codes like N00HH, a JSON object, or a JSON file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("decompose", help="triage/response effects of candidate policies as CSV")
    _add_common(p, model=True, population=True)
    p.add_argument("--allow-list", help="JSON list of candidate policies (default: all)")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("lfm", help="learning-from-mistakes policy")
    _add_common(p, baseline=True, kappa=True)
    p.set_defaults(func=cmd_lfm)

    p = sub.add_parser("sweep", help="kappa bands of constant recommendation as CSV")
    _add_common(p, baseline=True)
    p.add_argument("--kappa-min", type=_nonneg, default=0.0)
    p.add_argument("--kappa-max", type=_nonneg, default=10.0)
    p.add_argument("--compare", action="store_true", help="note disagreements with the published band starts on stderr")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle", help="grid-adversary minimax check (at most 4 characteristic values)")
    _add_common(p, baseline=True, kappa=True)
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--grid-step", type=float, default=0.05)
    p.add_argument("--allow-list")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("fit", help="fit mistake statistics and the plug-in policy from a decision log")
    _add_common(p, kappa=True)
    p.add_argument("--log", required=True)
    p.add_argument("--smoothing", type=_nonneg, default=0.0)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("erm", help="cost-weighted empirical risk minimisation over a policy class")
    _add_common(p, kappa=True)
    p.add_argument("--log", required=True)
    p.add_argument("--allow-list")
    p.set_defaults(func=cmd_erm)

    p = sub.add_parser("simulate", help="simulate subjects playing the hiring game")
    _add_common(p, model=True, population=True)
    p.add_argument("--treatment", default="Triage")
    p.add_argument("--policy")
    p.add_argument("--n-subjects", type=int, default=1000)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--log-out", help="also write the subject log CSV here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ingest", help="summarise a subject log by treatment")
    p.add_argument("--log", required=True)
    p.add_argument("--filter-column")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("population", help="validate or search game populations")
    p.add_argument("action", choices=["validate", "search"])
    _add_common(p, population=True)
    p.add_argument("--bc-equivalent", action="store_true", help="search: require types B and C to coincide")
    p.set_defaults(func=cmd_population)

    p = sub.add_parser("replicate", help="run every acceptance check and write a report")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_replicate)

    parser._subparsers_map = sub.choices
    return parser


def _load_config(path: str) -> dict:
    text = _read(path)
    try:
        cfg = tomllib.loads(text) if path.endswith(".toml") else json.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"{path}: {e}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a table/object")
    return {k.replace("-", "_"): v for k, v in cfg.items()}


def _apply_config(sub, cfg: dict):
    known = {a.dest: a for a in sub._actions}
    unknown = sorted(set(cfg) - set(known))
    if unknown:
        raise ConfigError(f"unknown config keys for this command: {unknown}")
    defaults = {}
    for k, v in cfg.items():
        action = known[k]
        if isinstance(v, list):
            v = ",".join(map(str, v))
        if action.type is not None and not isinstance(v, bool):
            try:
                v = action.type(str(v))
            except (argparse.ArgumentTypeError, ValueError) as e:
                raise ConfigError(f"config key {k}: {e}") from None
        defaults[k] = v
        action.required = False
    sub.set_defaults(**defaults)


def _command_of(argv: list) -> str | None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    _, rest = pre.parse_known_args(argv)
    return next((a for a in rest if not a.startswith("-")), None)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        config = pre.parse_known_args(argv)[0].config
        if config:
            command = _command_of(argv)
            if command not in parser._subparsers_map:
                raise UsageError(f"unknown command {command!r}")
            _apply_config(parser._subparsers_map[command], _load_config(config))
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("no command given; see --help")
        if getattr(args, "threads", 1) < 1:
            raise ConfigError("--threads must be >= 1")
        if hasattr(args, "epsilon") and not 0 < args.epsilon <= 1:
            raise ConfigError("--epsilon must lie in (0, 1]")
        rc = args.func(args)
        return 0 if rc is None else rc
    except CliError as e:
        print(f"{e.prefix}: {e}", file=sys.stderr)
        return e.code
    except (SupportMismatch, CapExceeded) as e:
        print(f"validation failure: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
