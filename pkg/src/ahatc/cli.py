"""Command-line front end: ``ahatc compile|run|extract|verify|empty|baseline``.

Exit codes: 0 accept (or success), 1 reject (or mismatches found), 2 error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .baselines import (
    BaselineError,
    equal_counts_machine,
    load_smcm,
    ltl_count_membership,
    non_semilinear_machine,
    parse_ltl_count,
    run_smcm,
)
from .compiler import (
    CompiledLanguage,
    compile_diophantine,
    compile_homogeneous_qfpa_nem,
    compile_qfpa_one_layer,
    compile_quadratic_system_two_layers,
    compile_semialg,
    compile_sqrt_two_layer_nem,
)
from .core import AhatError, AhatModel, format_rational, run_ahat
from .dsl import format_file, parse_alphabet, parse_polynomial, parse_qfpa, parse_semialg
from .extractor import branches_to_qfpa, branches_to_semialg, check_one_layer, explore
from .formulas import And, Atom, formula_variables
from .modelio import dumps_model, model_from_dict
from .polynomial import format_polynomial
from .verifier import bounded_emptiness, check_equivalence

COMPILE_MODES = ("semialg", "qfpa1", "quad2", "sqrt-nem", "hom-nem")
EXTRACT_MODES = ("semialg", "qfpa")
BASELINES = ("smcm", "ltlc")
BUILTIN_MACHINES = {"builtin:equal-counts": equal_counts_machine, "builtin:non-semilinear": non_semilinear_machine}

DEFAULT_MAX_SUM = 15
DEFAULT_PERMS = 100
DEFAULT_SEED = 0
DEFAULT_BRANCH_BUDGET = 1 << 20


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str
    inputs: tuple = ()
    output: str | None = None
    mode: str | None = None
    word: str | None = None
    max_sum: int = DEFAULT_MAX_SUM
    perms: int = DEFAULT_PERMS
    seed: int = DEFAULT_SEED
    branch_budget: int = DEFAULT_BRANCH_BUDGET
    min_component: int = 0
    trace: bool = False
    extra: dict = field(default_factory=dict)

    def validate(self) -> "RunConfig":
        cmd = self.subcommand
        allowed = {"compile": COMPILE_MODES, "extract": EXTRACT_MODES, "baseline": BASELINES}
        if cmd in allowed and self.mode not in allowed[cmd]:
            raise UsageError(f"{cmd}: mode must be one of {', '.join(allowed[cmd])}")
        if self.max_sum < 1:
            raise UsageError("--max-sum must be at least 1")
        if self.perms < 0:
            raise UsageError("--perms must be nonnegative")
        if self.branch_budget < 1:
            raise UsageError("--branch-budget must be positive")
        if self.min_component < 0:
            raise UsageError("--min-component must be nonnegative")
        if cmd == "compile" and self.mode != "sqrt-nem" and not self.inputs:
            raise UsageError(f"compile --mode {self.mode} needs a formula file")
        for path in self.inputs:
            if path in BUILTIN_MACHINES and cmd == "baseline" and self.mode == "smcm":
                continue
            if not Path(path).is_file():
                raise UsageError(f"no such file: {path}")
        return self


def _read(path: str) -> str:
    return Path(path).read_text()


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# model files carrying a compiled language


def _language_section(c: CompiledLanguage) -> dict:
    sec = {
        "variable_letters": list(c.variable_letters),
        "marker_letters": list(c.marker_letters),
        "fresh_letters": list(c.fresh_letters),
    }
    if c.reduction is not None:
        sec["polynomial"] = format_polynomial(c.reduction.source)
    else:
        sec["system"] = [format_polynomial(q) for q in c.system]
    return sec


def _language_from_section(model: AhatModel, sec: dict) -> CompiledLanguage:
    variables = tuple(sec["variable_letters"])
    if "polynomial" in sec:
        c = compile_diophantine(parse_polynomial(sec["polynomial"], variables))
    else:
        c = compile_quadratic_system_two_layers([parse_polynomial(q, variables) for q in sec["system"]])
    if c.model != model or list(c.marker_letters) != sec["marker_letters"] or list(c.fresh_letters) != sec["fresh_letters"]:
        raise AhatError("language section does not match the stored model")
    return CompiledLanguage(model, c.source, c.variable_letters, c.marker_letters, c.fresh_letters, c.reduction, c.system)


def load_target(path: str):
    """Load a model file; returns a CompiledLanguage when it carries a language section."""
    data = json.loads(_read(path))
    model = model_from_dict(data)
    sec = data.get("language") if isinstance(data, dict) else None
    if sec:
        return _language_from_section(model, sec)
    return model


def _model_of(target) -> AhatModel:
    return target.model if isinstance(target, CompiledLanguage) else target


def _letters_of(target) -> tuple:
    return tuple(target.variable_letters) if isinstance(target, CompiledLanguage) else tuple(target.alphabet)


def split_word(word: str, alphabet) -> list:
    """Whitespace-separated letters, or greedy longest match against ``alphabet``."""
    if any(ch.isspace() for ch in word):
        return word.split()
    letters = sorted(alphabet, key=len, reverse=True)
    out, i = [], 0
    while i < len(word):
        for a in letters:
            if word.startswith(a, i):
                out.append(a)
                i += len(a)
                break
        else:
            raise UsageError(f"cannot split {word!r} at offset {i} into letters of {list(alphabet)}")
    return out


# subcommands


def cmd_compile(cfg: RunConfig) -> int:
    text = _read(cfg.inputs[0]) if cfg.inputs else ""
    extra = None
    if cfg.mode == "sqrt-nem":
        model = compile_sqrt_two_layer_nem()
    elif cfg.mode == "semialg":
        model = compile_semialg(parse_semialg(text), parse_alphabet(text))
    elif cfg.mode == "qfpa1":
        model = compile_qfpa_one_layer(parse_qfpa(text), parse_alphabet(text))
    elif cfg.mode == "hom-nem":
        model = compile_homogeneous_qfpa_nem(parse_qfpa(text), parse_alphabet(text))
    else:
        c = _compile_quad(text)
        model, extra = c.model, {"language": _language_section(c)}
    _emit(dumps_model(model, extra) + "\n", cfg.output)
    return 0


def _compile_quad(text: str) -> CompiledLanguage:
    f = parse_semialg(text)
    alphabet = parse_alphabet(text) or formula_variables(f)
    if isinstance(f, Atom) and f.rel == "=":
        return compile_diophantine(f.poly.with_variables(alphabet))
    parts = f.args if isinstance(f, And) else (f,)
    if parts and all(isinstance(a, Atom) and a.rel == "<" for a in parts):
        return compile_quadratic_system_two_layers([a.poly.with_variables(alphabet) for a in parts])
    raise UsageError("quad2 input must be one equation 'p = 0' or a conjunction of 'q < 0' atoms")


def _trace_dict(trace) -> dict:
    def vec(v):
        return [format_rational(x) for x in v]

    layers = []
    for li in range(len(trace.argmax)):
        layers.append(
            {
                "attends": [sorted(s) for s in trace.argmax[li]],
                "ffn_pre": [[vec(v) for v in pres] for pres in trace.ffn_pre[li]],
                "output": [vec(v) for v in trace.activations[li + 1]],
            }
        )
    return {"word": list(trace.word), "input": [vec(v) for v in trace.activations[0]], "layers": layers}


def cmd_run(cfg: RunConfig) -> int:
    model = _model_of(load_target(cfg.inputs[0]))
    if not cfg.word:
        raise UsageError("the empty word is not an input")
    ok, trace = run_ahat(model, split_word(cfg.word, model.alphabet))
    print("accept" if ok else "reject")
    if cfg.trace:
        _emit(json.dumps(_trace_dict(trace), indent=1) + "\n", cfg.output)
    return 0 if ok else 1


def cmd_extract(cfg: RunConfig) -> int:
    path = cfg.inputs[0]
    model = _model_of(load_target(path))
    if cfg.mode == "qfpa":
        check_one_layer(model)
    ext = explore(model, cfg.branch_budget)
    f = branches_to_qfpa(ext) if cfg.mode == "qfpa" else branches_to_semialg(ext)
    digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    head = f"# extracted from model sha256:{digest}\n# branches: {len(ext.branches)} feasible, {ext.explored} explored, {ext.pruned} pruned\n"
    _emit(head + format_file(f, model.alphabet), cfg.output)
    return 0


def cmd_verify(cfg: RunConfig) -> int:
    target = load_target(cfg.inputs[0])
    text = _read(cfg.inputs[1])
    letters = _letters_of(target)
    header = parse_alphabet(text)
    if header is not None and header != letters:
        raise UsageError(f"formula alphabet {list(header)} differs from model letters {list(letters)}")
    f = parse_semialg(text, letters)
    report = check_equivalence(target, f, cfg.max_sum, permutation_trials=cfg.perms, seed=cfg.seed)
    _emit(json.dumps(report.to_dict(), indent=1) + "\n", cfg.output)
    return 0 if report.ok else 1


def cmd_empty(cfg: RunConfig) -> int:
    target = load_target(cfg.inputs[0])
    rep = bounded_emptiness(target, cfg.max_sum, cfg.min_component)
    lines = []
    if rep.witness is None:
        lines.append("none (bounded; not a proof of emptiness)")
    else:
        lines.append("witness: " + " ".join(str(x) for x in rep.witness))
    if rep.zero_vector_accepted is not None:
        lines.append("zero vector accepted: " + ("yes" if rep.zero_vector_accepted else "no"))
    lines.append(f"searched sums 1..{cfg.max_sum}; {rep.note}")
    _emit("\n".join(lines) + "\n", cfg.output)
    return 0 if rep.witness is not None else 1


def cmd_baseline(cfg: RunConfig) -> int:
    source, word = cfg.inputs[0], cfg.word or ""
    if cfg.mode == "smcm":
        machine = BUILTIN_MACHINES[source]() if source in BUILTIN_MACHINES else load_smcm(_read(source))
        ok = run_smcm(machine, split_word(word, machine.alphabet))
    else:
        f, alphabet = parse_ltl_count(_read(source))
        if not word:
            raise UsageError("the empty word has no first position")
        letters = split_word(word, alphabet) if alphabet else word.split() if " " in word else list(word)
        ok = ltl_count_membership(f, letters)
    print("accept" if ok else "reject")
    return 0 if ok else 1


COMMANDS = {
    "compile": cmd_compile,
    "run": cmd_run,
    "extract": cmd_extract,
    "verify": cmd_verify,
    "empty": cmd_empty,
    "baseline": cmd_baseline,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ahatc", description="Compile, run, extract and verify average hard attention models.")
    sub = ap.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("compile", help="compile a formula file into a model file")
    p.add_argument("formula", nargs="?")
    p.add_argument("--mode", required=True, choices=COMPILE_MODES)
    p.add_argument("-o", "--out")

    p = sub.add_parser("run", help="run a model on a word")
    p.add_argument("model")
    p.add_argument("word")
    p.add_argument("--trace", action="store_true", help="dump activations and attention sets as JSON")
    p.add_argument("-o", "--out", help="write the trace here instead of stdout")

    p = sub.add_parser("extract", help="extract a formula from a model")
    p.add_argument("model")
    p.add_argument("--mode", default="semialg", choices=EXTRACT_MODES)
    p.add_argument("--branch-budget", type=int, default=DEFAULT_BRANCH_BUDGET)
    p.add_argument("-o", "--out")

    p = sub.add_parser("verify", help="compare a model with a formula on all small count vectors")
    p.add_argument("model")
    p.add_argument("formula")
    p.add_argument("--max-sum", type=int, default=DEFAULT_MAX_SUM)
    p.add_argument("--perms", type=int, default=DEFAULT_PERMS, help="random reorderings per sampled vector")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("-o", "--out")

    p = sub.add_parser("empty", help="search for the least accepted count vector")
    p.add_argument("model")
    p.add_argument("--max-sum", type=int, default=DEFAULT_MAX_SUM)
    p.add_argument("--min-component", type=int, default=0)
    p.add_argument("-o", "--out")

    p = sub.add_parser("baseline", help="run a counter machine or an LTL[Count] formula on a word")
    p.add_argument("kind", choices=BASELINES)
    p.add_argument("source", help="machine JSON, formula file, or builtin:equal-counts / builtin:non-semilinear")
    p.add_argument("word", nargs="?", default="")
    return ap


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    cmd = ns.subcommand
    get = lambda name, default=None: getattr(ns, name, default)  # noqa: E731
    if cmd == "compile":
        inputs = (ns.formula,) if ns.formula else ()
    elif cmd == "verify":
        inputs = (ns.model, ns.formula)
    elif cmd == "baseline":
        inputs = (ns.source,)
    else:
        inputs = (ns.model,)
    return RunConfig(
        subcommand=cmd,
        inputs=inputs,
        output=get("out"),
        mode=ns.kind if cmd == "baseline" else get("mode"),
        word=get("word"),
        max_sum=get("max_sum", DEFAULT_MAX_SUM),
        perms=get("perms", DEFAULT_PERMS),
        seed=get("seed", DEFAULT_SEED),
        branch_budget=get("branch_budget", DEFAULT_BRANCH_BUDGET),
        min_component=get("min_component", 0),
        trace=get("trace", False),
    )


def main(argv=None) -> int:
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        cfg = config_from_args(ns).validate()
        return COMMANDS[cfg.subcommand](cfg)
    except (UsageError, AhatError, BaselineError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
