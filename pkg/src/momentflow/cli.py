"""``momentflow`` command line: flow, check, compare and batch runs.

Inputs are bracket documents (JSON files) or catalog selectors such as
``catalog:heisenberg3``.  Reports are deterministic: the same command and
seed give byte-identical output.  Wall-clock time is only logged.

Exit codes: 0 ok, 2 input error, 3 numerical non-convergence, 4 internal error.
"""
import argparse
from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import fields
import io
import logging
import os
from pathlib import Path
import sys
import time
import traceback
import warnings

import numpy as np

from . import catalog, kernels
from .bracket_rep import (
    Bracket, NotALieAlgebra, group_act, invariants, is_lie, is_nilpotent, jacobi_defect, model_for,
)
from .documents import (
    DocumentError, NonFiniteValue, document_digest, dumps, load_document,
    parse_document, serialize_document,
)
from .flow_engine import FlowConfig, FlowStatus
from .moment_core import critical_residual, moment_matrix, orbit_dimension, stabilizer_dimension
from .orbit_analyzer import (
    InternalCheckFailed, ZeroBracketError, compare_real_complex, compare_real_forms,
    is_closed_orbit_sl, is_distinguished, korbit_signature, nilsoliton_data,
    random_well_conditioned,
)

logger = logging.getLogger("momentflow")

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED, EXIT_INTERNAL = 0, 2, 3, 4
SCHEMA = "momentflow.report/1"
THREADS_ENV = "MOMENTFLOW_THREADS"
_NONCONVERGED = (FlowStatus.MAX_TIME, FlowStatus.STALLED)


class InputError(ValueError):
    pass


# -- report pieces -------------------------------------------------------------

def _plain(obj):
    """Dataclasses, enums and tuples to JSON-ready values."""
    if hasattr(obj, "__dataclass_fields__"):
        return {f.name: _plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_plain(x) for x in obj]
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def _invariants_dict(inv):
    if inv is None:
        return None
    out = _plain(inv)
    out.pop("jacobi_defect")
    return out


def _certificate(cert):
    return None if cert is None else _plain(cert)


def _flow_timing(result):
    return {
        "flow_time": result.elapsed_flow_time,
        "accepted_steps": result.accepted_steps,
        "rejected_steps": result.rejected_steps,
    }


def _flow_config(opts):
    try:
        return FlowConfig(tol_grad=opts.tol_grad, tol_residual=opts.tol_residual,
                          max_flow_time=opts.max_time)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _config_echo(opts, cfg):
    return {
        "group": opts.group,
        "complexify": opts.complexify,
        "kempf_ness": opts.kempf_ness,
        "perturb_seed": opts.perturb_seed,
        "allow_non_lie": opts.allow_non_lie,
        "sample_times": list(opts.sample_times or []),
        "flow": _plain(cfg),
        "kernel_backend": kernels.BACKEND,
    }


def _input_block(source, doc):
    return {"source": source, "name": doc.name, "n": doc.n, "field": doc.field,
            "digest": document_digest(doc)}


def _prepare(doc, opts, need_lie=True):
    """Bracket after --complexify and --perturb-seed, with input validation."""
    mu = doc.bracket()
    if mu.is_zero():
        raise ZeroBracketError("zero bracket: nothing to flow")
    if opts.complexify:
        if mu.is_complex:
            raise InputError("--complexify given for a document that is already complex")
        mu = Bracket(mu.n, mu.upper.astype(complex))
    if mu.is_complex and opts.group != "gl":
        raise InputError("complex brackets only support --group gl")
    if need_lie and not opts.allow_non_lie and not is_lie(mu):
        raise NotALieAlgebra(f"Jacobi identity fails (defect {jacobi_defect(mu):.3g}); "
                             "use --allow-non-lie for raw tensors")
    if opts.perturb_seed is not None:
        rng = np.random.default_rng(opts.perturb_seed)
        mu = group_act(random_well_conditioned(mu.n, rng, complex_=mu.is_complex), mu)
    return mu


# -- commands -----------------------------------------------------------------

def run_flow(source, doc, opts):
    cfg = _flow_config(opts)
    if opts.kempf_ness and opts.group != "sl":
        raise InputError("--kempf-ness needs --group sl: the GL moment never vanishes on brackets")
    mu = _prepare(doc, opts)
    lie = not opts.allow_non_lie
    result = {}
    if opts.kempf_ness:
        if mu.is_complex:
            raise InputError("--kempf-ness is implemented for real brackets")
        v = is_closed_orbit_sl(mu, cfg)
        flow = v.flow
        result.update(verdict=v.verdict.value, status=flow.status.value, message=v.message,
                      moment_ratio=v.moment_ratio, norm_ratio=v.norm_ratio,
                      norm_monotone=bool(np.all(np.diff(flow.norm_history) <= 0.0)))
        if lie:
            start = invariants(mu)
            lim = v.limit_bracket
            limit_inv = invariants(lim) if is_lie(lim) else None
            result["invariants"] = {"start": _invariants_dict(start), "limit": _invariants_dict(limit_inv)}
    else:
        times = sorted(opts.sample_times) if opts.sample_times else None
        d = is_distinguished(mu, cfg, lie=lie, group=opts.group, t_eval=times)
        flow = d.flow
        sig = korbit_signature(flow.limit_point, flow.model)
        result.update(verdict=d.verdict.value, status=flow.status.value, message=d.message,
                      certificate=_certificate(d.certificate),
                      signature={"spectrum": list(sig.spectrum), "f_value": sig.f_value},
                      max_f_increase=flow.max_f_increase, max_sphere_error=flow.max_sphere_error)
        if lie:
            result["invariants"] = {
                "start": _invariants_dict(invariants(mu)),
                "limit": _invariants_dict(sig.invariants),
                "match": d.invariants_match_start,
            }
            if (d.distinguished and not mu.is_complex and opts.group == "gl"
                    and is_nilpotent(d.limit_bracket)):
                result["nilsoliton"] = _nilsoliton_dict(nilsoliton_data(d.limit_bracket, cfg.tol_residual))
        if times:
            result["samples"] = [{"t": t, "point": flow.samples[t]} for t in times if t in flow.samples]
    result["limit_point"] = flow.limit_point
    report = {"timing": _flow_timing(flow)}
    code = EXIT_NONCONVERGED if flow.status in _NONCONVERGED else EXIT_OK
    return result, report, code


def _nilsoliton_dict(ns):
    return {"soliton_constant": ns.soliton_constant, "derivation": ns.derivation,
            "eigenvalue_type": ns.type_string, "spectrum": list(ns.spectrum),
            "derivation_defect": ns.derivation_defect}


def run_check(source, doc, opts):
    cfg = _flow_config(opts)
    mu = _prepare(doc, opts)
    model = model_for(mu, opts.group)
    v = mu.vector()
    M = moment_matrix(model, v)
    cert = critical_residual(model, v, cfg.bucket_tol)
    nsq = model.inner_v(v, v)
    mnorm = float(np.sqrt(model.inner_g(M, M)))
    if mu.is_complex:
        n = mu.n
        moment = M[:n, :n] + 1j * M[n:, :n]
    else:
        moment = M
    defect = jacobi_defect(mu)
    result = {
        "moment": moment,
        "vector_norm_sq": nsq,
        "f_value": cert.f_value,
        "certificate": _certificate(cert),
        "critical": cert.residual < cfg.tol_residual,
        "jacobi_defect": defect,
        "lie": is_lie(mu),
        "stabilizer_dim": stabilizer_dimension(model, v),
        "orbit_dim": orbit_dimension(model, v),
    }
    if opts.group == "sl":
        result["moment_ratio"] = mnorm / nsq
        result["minimal"] = mnorm < cfg.tol_grad * nsq
    if result["lie"] and not opts.allow_non_lie:
        inv = invariants(mu)
        result["invariants"] = _invariants_dict(inv)
        if result["critical"] and inv.nilpotent and not mu.is_complex and opts.group == "gl":
            result["nilsoliton"] = _nilsoliton_dict(nilsoliton_data(mu, cfg.tol_residual))
    return result, {}, EXIT_OK


def _verdict_block(d):
    flow = d.flow
    return {"verdict": d.verdict.value, "status": flow.status.value,
            "certificate": _certificate(d.certificate), "invariants_match": d.invariants_match_start,
            "timing": _flow_timing(flow)}


def _closed_block(v):
    return {"verdict": v.verdict.value, "status": v.flow.status.value,
            "moment_ratio": v.moment_ratio, "norm_ratio": v.norm_ratio,
            "timing": _flow_timing(v.flow)}


def run_compare(source, doc, opts, other=None):
    cfg = _flow_config(opts)
    if opts.complexify or opts.kempf_ness or opts.group != "gl":
        raise InputError("compare takes neither --complexify, --kempf-ness nor --group sl")
    mu = _prepare(doc, opts)
    if mu.is_complex:
        raise InputError("compare expects real brackets")
    if other is None:
        rng = np.random.default_rng(0 if opts.perturb_seed is None else opts.perturb_seed)
        rep = compare_real_complex(mu, cfg, rng)
        blocks = [rep.real, rep.complex_embedded, rep.complex_perturbed]
        result = {
            "mode": "real_complex",
            "real_locus_error": rep.real_locus_error,
            "real": _verdict_block(rep.real),
            "complex_embedded": _verdict_block(rep.complex_embedded),
            "complex_perturbed": _verdict_block(rep.complex_perturbed),
            "verdicts_agree": rep.verdicts_agree,
            "real_f": rep.real_f,
            "mu_star_value": rep.mu_star_value,
            "complex_mu_star_value": rep.complex_mu_star_value,
        }
    else:
        osource, odoc = other
        mu2 = _prepare(odoc, opts)
        if mu2.is_complex:
            raise InputError("compare expects real brackets")
        with warnings.catch_warnings():
            # the mismatch is carried in the report instead
            warnings.simplefilter("ignore", RuntimeWarning)
            rep = compare_real_forms(mu, mu2, cfg)
        blocks = [rep.first, rep.second]
        block = _verdict_block if rep.mode == "distinguished" else _closed_block
        result = {
            "mode": rep.mode,
            "second_input": _input_block(osource, odoc),
            "complex_invariants_match": rep.complex_invariants_match,
            "warning": rep.warning,
            "first": block(rep.first),
            "second": block(rep.second),
            "verdicts_agree": rep.verdicts_agree,
        }
    code = EXIT_OK
    if any(b.flow.status in _NONCONVERGED for b in blocks):
        code = EXIT_NONCONVERGED
    return result, {}, code


COMMANDS = {"flow": run_flow, "check": run_check, "compare": run_compare}


def build_report(command, source, doc, opts, other=None):
    """Full report dict and exit code; errors become an ``error`` block."""
    cfg_echo = None
    report = {"schema": SCHEMA, "command": command, "input": _input_block(source, doc)}
    try:
        cfg_echo = _config_echo(opts, _flow_config(opts))
        runner = COMMANDS[command]
        if other is not None:
            result, extra, code = runner(source, doc, opts, other)
        else:
            result, extra, code = runner(source, doc, opts)
        report["config"] = cfg_echo
        report["result"] = result
        report.update(extra)
    except (ZeroBracketError, NotALieAlgebra, InputError, DocumentError) as exc:
        report["config"] = cfg_echo
        report["error"] = {"kind": "input", "type": type(exc).__name__, "message": str(exc)}
        code = EXIT_INPUT
    except (InternalCheckFailed, AssertionError) as exc:
        report["config"] = cfg_echo
        report["error"] = {"kind": "internal", "type": type(exc).__name__, "message": str(exc)}
        code = EXIT_INTERNAL
    except Exception as exc:  # anything unexpected is an internal failure
        logger.debug("internal error\n%s", traceback.format_exc())
        report["config"] = cfg_echo
        report["error"] = {"kind": "internal", "type": type(exc).__name__, "message": str(exc)}
        code = EXIT_INTERNAL
    report["exit_code"] = code
    return report, code


# -- output --------------------------------------------------------------------

def flatten(obj, prefix=""):
    """Nested report to a flat {dotted.key: scalar} mapping; lists joined by ';'."""
    out = {}
    if isinstance(obj, dict):
        for k, v in obj.items():
            out.update(flatten(v, f"{prefix}.{k}" if prefix else str(k)))
    elif isinstance(obj, (list, tuple, np.ndarray)):
        arr = np.asarray(obj, dtype=object).ravel() if isinstance(obj, np.ndarray) else obj
        if all(not isinstance(x, (dict, list, tuple, np.ndarray)) for x in arr):
            out[prefix] = ";".join(_cell(x) for x in arr)
        else:
            for t, v in enumerate(arr):
                out.update(flatten(v, f"{prefix}[{t}]"))
    else:
        out[prefix] = _cell(obj)
    return out


def _cell(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    text = dumps(x)
    return text[1:-1] if isinstance(x, str) else text


def render_rows(rows):
    if not rows:
        return ""
    columns = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", restval="")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def render(report, fmt):
    if fmt == "json":
        return dumps(report) + "\n"
    return render_rows([flatten(report)])


def _emit(text, output):
    if output:
        with open(output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# -- inputs and batch ------------------------------------------------------------

def resolve_input(target):
    """A single (source, document) pair from a path or ``catalog:name``."""
    if catalog.is_catalog_selector(target):
        docs = catalog.select(target)
        if len(docs) != 1:
            raise DocumentError("expected exactly one catalog entry", target)
        return docs[0]
    return target, load_document(target)


def resolve_batch(target):
    if catalog.is_catalog_selector(target):
        return catalog.select(target)
    path = Path(target)
    if not path.is_dir():
        raise DocumentError("batch target must be a directory or a catalog selector", target)
    return [(str(p), load_document(p)) for p in sorted(path.glob("*.json"))]


def worker_count(n_items):
    cap = os.environ.get(THREADS_ENV)
    workers = os.cpu_count() or 1
    if cap:
        try:
            cap = int(cap)
        except ValueError:
            raise InputError(f"{THREADS_ENV} must be a positive integer, got {cap!r}") from None
        if cap < 1:
            raise InputError(f"{THREADS_ENV} must be a positive integer, got {cap}")
        workers = min(workers, cap)
    return max(1, min(workers, n_items))


def _batch_item(args):
    command, source, text, opts = args
    doc = parse_document(text, source)
    if doc.bracket().is_zero():
        row = {"source": source, "name": doc.name, "n": doc.n, "skipped": "zero bracket"}
        return row, EXIT_OK
    report, code = build_report(command, source, doc, opts)
    row = {"source": source, "name": doc.name, "n": doc.n}
    row.update(flatten({k: v for k, v in report.items() if k not in ("schema", "config", "input")}))
    for key in [k for k in row if k.startswith("result.limit_point") or k.startswith("result.samples")]:
        del row[key]
    return row, code


def run_batch(target, opts):
    items = resolve_batch(target)
    sub = opts.batch_command
    # documents travel as text so workers never share objects
    jobs = [(sub, source, serialize_document(doc), opts) for source, doc in items]
    workers = worker_count(len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_batch_item, jobs))
    else:
        results = [_batch_item(job) for job in jobs]
    rows = [r for r, _ in results]
    code = max([c for _, c in results], default=EXIT_OK)
    return rows, code


# -- argument parsing --------------------------------------------------------------

def _sample_times(text):
    try:
        times = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma separated times") from None
    if any(t < 0 or not np.isfinite(t) for t in times):
        raise argparse.ArgumentTypeError("times must be finite and non-negative")
    return times


def make_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--group", choices=("gl", "sl"), default="gl")
    common.add_argument("--complexify", action="store_true",
                        help="work with the complexified bracket under GL_n(C)")
    common.add_argument("--kempf-ness", action="store_true",
                        help="run the Kempf-Ness flow (needs --group sl)")
    common.add_argument("--perturb-seed", "--seed", type=int, default=None, dest="perturb_seed",
                        help="start from g.mu for a random well-conditioned g drawn with this seed")
    common.add_argument("--tol-grad", type=float, default=FlowConfig.tol_grad)
    common.add_argument("--tol-residual", type=float, default=FlowConfig.tol_residual)
    common.add_argument("--max-time", type=float, default=FlowConfig.max_flow_time)
    common.add_argument("--allow-non-lie", action="store_true",
                        help="accept skew tensors violating Jacobi; Lie fields are suppressed")
    common.add_argument("--sample-times", type=_sample_times, default=None,
                        help="comma separated flow times at which to record the trajectory")
    common.add_argument("--output", "-o", default=None)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--verbose", "-v", action="store_true")

    parser = argparse.ArgumentParser(prog="momentflow", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("flow", parents=[common], help="gradient flow from one bracket")
    p.add_argument("input")
    p = sub.add_parser("check", parents=[common], help="moment, criticality and invariants")
    p.add_argument("input")
    p = sub.add_parser("compare", parents=[common],
                       help="real vs complex (one input) or two real forms (two inputs)")
    p.add_argument("input")
    p.add_argument("other", nargs="?")
    p = sub.add_parser("batch", parents=[common], help="run a command over a directory or the catalog")
    p.add_argument("target", help="directory of *.json documents, 'catalog' or 'catalog:a,b'")
    p.add_argument("--command", dest="batch_command", choices=("flow", "check", "compare"),
                   default="flow")
    return parser


def main(argv=None):
    parser = make_parser()
    opts = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if opts.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    started = time.perf_counter()
    try:
        if opts.command == "batch":
            rows, code = run_batch(opts.target, opts)
            if opts.format == "csv":
                text = render_rows(rows)
            else:
                text = dumps({"schema": SCHEMA, "command": "batch", "target": opts.target,
                              "config": _config_echo(opts, _flow_config(opts)),
                              "subcommand": opts.batch_command, "rows": rows}) + "\n"
        else:
            source, doc = resolve_input(opts.input)
            other = None
            if opts.command == "compare" and opts.other:
                other = resolve_input(opts.other)
            report, code = build_report(opts.command, source, doc, opts, other)
            if "error" in report:
                print(f"momentflow: {report['error']['message']}", file=sys.stderr)
            text = render(report, opts.format)
        _emit(text, opts.output)
    except (DocumentError, InputError) as exc:
        print(f"momentflow: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NonFiniteValue as exc:
        print(f"momentflow: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    logger.info("wall clock %.3f s", time.perf_counter() - started)
    return code


if __name__ == "__main__":
    sys.exit(main())
