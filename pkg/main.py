"""
Groupoidification engine - Command line interface
Builds groupoids, spans and the fermion model, runs the verification suite and the diagram calculus
"""

import argparse
import json
import logging
import sys
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field, ValidationError

import diagram_lang
from degroupoidify import span_matrix
from fermion_model import LEVELS, T_CONVENTIONS, build_model, export_model, verify_all
from groupoid_core import (
    FiniteGroupoid, GFunctor, automorphism_group, cardinality, iso_classes, validate_functor, validate_groupoid
)
from interchange import (
    MatrixRecord, VerificationReport, dump, load, span_to_record, two_morphism_to_record, witness_to_record
)
from span_calculus import EQUIVALENCE, MODES, Span, compare_spans, compose_spans, reverse_span
from utils import BudgetExhaustedError, ConfigManager, GroupoidifyError, SearchBudget, format_rational, setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_EXHAUSTED = 3


class CommandConfig(BaseModel):
    """Validated command line flags"""
    command: str = Field(..., description="Subcommand family")
    action: str = Field(..., description="Verb within the family")
    group: str = Field("Z2", description="Group spec: Z<n>, S<n>, perm:<cycles> or cayley:<path>")
    mode: Literal['strict', 'equivalence'] = Field('equivalence', description="Span comparison mode")
    semantics: Literal['free', 'span'] = Field('span', description="Diagram normalization semantics")
    level: Literal['matrices', 'spans', 'two_morphisms', 'adjunction', 'all'] = 'all'
    t_convention: Literal['inverse', 'plain'] = 'inverse'
    budget: Optional[int] = Field(None, ge=1, description="Search budget in nodes")
    jobs: int = Field(1, ge=1, le=64, description="Worker threads for independent checks")
    out: Optional[str] = Field(None, description="Output file or directory")
    format: Literal['human', 'structured'] = 'human'
    progress: bool = False
    inputs: List[str] = Field(default_factory=list, description="Positional file paths or expressions")
    samples: Optional[int] = Field(None, ge=0)
    max_generators: Optional[int] = Field(None, ge=1)
    seed: int = 0
    against: Optional[str] = None


def _emit(config: CommandConfig, human: str, structured: Any):
    """Print the human or structured rendering of a result"""
    if config.format == 'structured':
        if isinstance(structured, BaseModel):
            print(structured.to_json())
        else:
            print(json.dumps(structured, indent=2, sort_keys=True, default=str))
    else:
        print(human)


def _budget(config: CommandConfig) -> SearchBudget:
    return SearchBudget(config.budget or ConfigManager.get('search_budget'))


# groupoid
def cmd_groupoid(config: CommandConfig) -> int:
    obj = load(config.inputs[0])
    if config.action == 'validate':
        if isinstance(obj, GFunctor):
            report = validate_functor(obj)
        elif isinstance(obj, FiniteGroupoid):
            report = validate_groupoid(obj)
        else:
            raise GroupoidifyError(f"{config.inputs[0]} is neither a groupoid nor a functor record")
        human = "valid" if report.valid else "\n".join(["invalid:"] + [f"  - {e}" for e in report.errors])
        _emit(config, human, report)
        return EXIT_OK if report.valid else EXIT_FAILED

    if not isinstance(obj, FiniteGroupoid):
        raise GroupoidifyError(f"{config.inputs[0]} is not a groupoid record")
    report = validate_groupoid(obj)
    if not report.valid:
        _emit(config, "\n".join(["invalid:"] + [f"  - {e}" for e in report.errors]), report)
        return EXIT_FAILED
    partition = iso_classes(obj)
    classes = [{'representative': str(rep), 'size': len(cls), 'aut_order': automorphism_group(obj, rep).order}
               for rep, cls in zip(partition.representative, partition.classes)]
    info = {'name': obj.name, 'objects': len(obj.objects), 'morphisms': len(obj.morphisms),
            'iso_classes': classes, 'cardinality': format_rational(cardinality(obj))}
    lines = [f"name: {obj.name or '-'}", f"objects: {info['objects']}", f"morphisms: {info['morphisms']}",
             f"iso classes: {len(classes)}"]
    lines += [f"  - {c['representative']} (size {c['size']}, |Aut| = {c['aut_order']})" for c in classes]
    lines.append(f"cardinality: {info['cardinality']}")
    _emit(config, "\n".join(lines), info)
    return EXIT_OK


# span
def _load_span(path: str) -> Span:
    obj = load(path)
    if not isinstance(obj, Span):
        raise GroupoidifyError(f"{path} is not a span record")
    return obj


def cmd_span(config: CommandConfig) -> int:
    spans = [_load_span(p) for p in config.inputs]
    if config.action == 'compose':
        if len(spans) != 2:
            raise GroupoidifyError("span compose needs two spans: K H (for K after H)")
        composite = compose_spans(spans[0], spans[1])
        record = span_to_record(composite)
        if config.out:
            dump(record, config.out)
        _emit(config, f"{composite.name}: apex with {len(composite.apex.objects)} objects, "
                      f"{len(composite.apex.morphisms)} morphisms", record)
        return EXIT_OK

    if config.action == 'matrix':
        matrix = span_matrix(spans[0])
        record = MatrixRecord(**matrix.to_record())
        if config.out:
            dump(record, config.out)
        width = max([len(e) for row in record.entries for e in row] + [1])
        lines = [f"rows: {', '.join(record.rows)}", f"cols: {', '.join(record.cols)}"]
        lines += ["  ".join(e.rjust(width) for e in row) for row in record.entries]
        _emit(config, "\n".join(lines), record)
        return EXIT_OK

    if len(spans) != 2:
        raise GroupoidifyError(f"span {config.action} needs two spans")
    mode = 'strict' if config.action == 'iso' else config.mode
    witness = compare_spans(spans[0], spans[1], mode, _budget(config))
    if witness is None:
        _emit(config, f"not {'isomorphic' if mode == 'strict' else 'equivalent'}", {'found': False, 'mode': mode})
        return EXIT_FAILED
    record = witness_to_record(witness)
    if config.out:
        dump(record, config.out)
    _emit(config, f"{'isomorphic' if mode == 'strict' else 'equivalent'} ({mode} witness)", record)
    return EXIT_OK


# fermion
def cmd_fermion(config: CommandConfig) -> int:
    if config.action == 'build':
        model = build_model(config.group, t_convention=config.t_convention)
        written = export_model(model, config.out) if config.out else []
        info = {'group': model.group.label, 'order': model.group.order,
                'psi': {'objects': len(model.psi.objects), 'morphisms': len(model.psi.morphisms)},
                'h': {'objects': len(model.h.objects), 'morphisms': len(model.h.morphisms)},
                'written': written}
        # Fdag is F with its legs swapped, compared in the requested mode
        dagger_ok = compare_spans(reverse_span(model.f), model.fdag, config.mode, _budget(config)) is not None
        info['fdag_is_reverse_of_f'] = {'mode': config.mode, 'holds': dagger_ok}
        lines = [f"group: {model.group.label} (order {model.group.order})",
                 f"psi: {info['psi']['objects']} objects, {info['psi']['morphisms']} morphisms",
                 f"h: {info['h']['objects']} objects, {info['h']['morphisms']} morphisms"]
        lines.append(f"fdag = reverse(f) ({config.mode}): {'pass' if dagger_ok else 'fail'}")
        lines += [f"wrote {path}" for path in written]
        _emit(config, "\n".join(lines), info)
        return EXIT_OK if dagger_ok else EXIT_FAILED

    report: VerificationReport = verify_all(config.group, level=config.level, jobs=config.jobs,
                                            budget=config.budget, progress=config.progress, mode=config.mode)
    if config.out:
        dump(report, config.out)
    _emit(config, report.render(), report)
    if report.exhausted:
        logger.warning("Search budget exhausted; report is partial")
        return EXIT_EXHAUSTED
    return EXIT_OK if report.passed else EXIT_FAILED


# diagram
def cmd_diagram(config: CommandConfig) -> int:
    if config.action == 'confluence':
        found = diagram_lang.confluence_sample(config.samples, config.max_generators, config.semantics,
                                               seed=config.seed, progress=config.progress)
        data = [{'expression': d.expression,
                 'first': diagram_lang.normal_form_to_record(d.first).model_dump(),
                 'second': diagram_lang.normal_form_to_record(d.second).model_dump()} for d in found]
        _emit(config, f"discrepancies: {len(found)}" + "".join(f"\n  - {d.expression}" for d in found), data)
        return EXIT_OK if not found else EXIT_FAILED

    text = config.inputs[0]
    if config.action == 'parse':
        expr = diagram_lang.parse(text)
        boundary = diagram_lang.typecheck(expr)
        data = {'expression': diagram_lang.render_expr(expr), 'domain': boundary.domain,
                'codomain': boundary.codomain, 'zero_object': boundary.zero_object,
                'nodes': diagram_lang.count_nodes(expr)}
        _emit(config, f"{data['expression']} : {boundary.domain or '1'} -> {boundary.codomain or '1'}", data)
        return EXIT_OK

    if config.action == 'normalize':
        nf = diagram_lang.normalize(text, config.semantics)
        _emit(config, diagram_lang.render_normal_form(nf), diagram_lang.normal_form_to_record(nf))
        return EXIT_OK

    if config.action == 'eq':
        if len(config.inputs) != 2:
            raise GroupoidifyError("diagram eq needs two expressions")
        equal = diagram_lang.diagram_eq(config.inputs[0], config.inputs[1], config.semantics)
        _emit(config, "equal" if equal else "not equal", {'equal': equal, 'semantics': config.semantics})
        return EXIT_OK if equal else EXIT_FAILED

    if config.action == 'k0':
        value = diagram_lang.k0_matrix(text, config.group)
        matrices = value if isinstance(value, tuple) else (value,)
        records = [MatrixRecord(**m.to_record()) for m in matrices]
        human = "\n\n".join("\n".join(" ".join(row) for row in r.entries) for r in records)
        _emit(config, human, [r.model_dump() for r in records])
        return EXIT_OK

    if config.against:
        result = diagram_lang.oracle_check(text, config.against, config.group)
        data = {'diagram_equal': result.diagram_equal, 'span_equivalent': result.span_equivalent,
                'agree': result.agree}
        _emit(config, "\n".join(f"{k}: {v}" for k, v in data.items()), data)
        return EXIT_OK if result.agree else EXIT_FAILED

    two = diagram_lang.evaluate_to_span(text, config.group)
    record = two_morphism_to_record(two)
    if config.out:
        dump(record, config.out)
    inner = two.inner.apex
    _emit(config, f"{two.name}: inner apex with {len(inner.objects)} objects, {len(inner.morphisms)} morphisms",
          record)
    return EXIT_OK


COMMANDS = {'groupoid': cmd_groupoid, 'span': cmd_span, 'fermion': cmd_fermion, 'diagram': cmd_diagram}

# Equation of the fermion model each verb exercises, printed by --paper-ref
PAPER_REF = {
    ('groupoid', 'validate'): "Eq 13: groupoid and functor axioms behind Psi, H, I and T",
    ('groupoid', 'info'): "Eq 12: iso classes, automorphism groups and groupoid cardinality",
    ('span', 'compose'): "Eq 14-15: span composition by weak pullback",
    ('span', 'matrix'): "Eq 4: degroupoidification of a span to an exact matrix",
    ('span', 'iso'): "Eq 12: strict isomorphism of spans",
    ('span', 'equiv'): "Eq 8: equivalence of spans",
    ('fermion', 'build'): "Eq 13, 20-22: the spans F, Fdag and the 2-morphisms eta, eps and their daggers",
    ('fermion', 'verify'): "Eq 1-4, 8, 18, 23, 24: Fock action, orthonormality, matrices, anticommutator, "
                           "resolution of identity, identity relations and zig-zags",
    ('diagram', 'parse'): "Eq 5: well-typedness of cup, cap and crossing diagrams",
    ('diagram', 'normalize'): "Eq 6-8: loop removal, zig-zag and cap-over-cup relations",
    ('diagram', 'eq'): "Eq 6-8: equality of normal forms",
    ('diagram', 'k0'): "Eq 9-10: classes [Q_+] = Matrix(Fdag), [Q_-] = Matrix(F)",
    ('diagram', 'eval'): "Eq 20-24: evaluation of diagrams as 2-morphisms between spans",
    ('diagram', 'confluence'): "Eq 6-8: independence of the normal form from rewrite order",
}

MODE_CHOICES = MODES + ('equiv',)
MODE_ALIASES = {'equiv': EQUIVALENCE}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="groupoidify", description=__doc__.strip().splitlines()[1])
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument("--log-file", default=None, help="Also log to this file")
    families = parser.add_subparsers(dest="command", required=True)

    for family, verbs in (('groupoid', ('validate', 'info')), ('span', ('compose', 'matrix', 'iso', 'equiv')),
                          ('fermion', ('build', 'verify')),
                          ('diagram', ('parse', 'normalize', 'eq', 'k0', 'eval', 'confluence'))):
        fam = families.add_parser(family)
        actions = fam.add_subparsers(dest="action", required=True)
        for verb in verbs:
            sub = actions.add_parser(verb, help=PAPER_REF[(family, verb)],
                                     description=f"Exercises {PAPER_REF[(family, verb)]}")
            sub.add_argument("--paper-ref", action="version", version=PAPER_REF[(family, verb)],
                             help="Print the equation this command exercises and exit")
            sub.add_argument("--format", choices=("human", "structured"), default="human")
            sub.add_argument("--out", default=None)
            sub.add_argument("--budget", type=int, default=None)
            if family in ('groupoid', 'span'):
                sub.add_argument("inputs", nargs="+", help="Record files")
            if family == 'fermion':
                sub.add_argument("--group", default="Z2")
                sub.add_argument("--level", choices=LEVELS, default="all")
                sub.add_argument("--jobs", type=int, default=None)
                sub.add_argument("--t-convention", choices=T_CONVENTIONS, default="inverse")
                sub.add_argument("--progress", action="store_true")
            if family in ('span', 'fermion'):
                sub.add_argument("--mode", choices=MODE_CHOICES, default=None, help="strict or equiv(alence)")
            if family == 'diagram':
                if verb != 'confluence':
                    sub.add_argument("inputs", nargs="+", help="Diagram expressions")
                sub.add_argument("--semantics", "--mode", dest="semantics", choices=diagram_lang.SEMANTICS,
                                 default=None)
                sub.add_argument("--group", default="Z1" if verb == 'k0' else "Z2")
                if verb == 'eval':
                    sub.add_argument("--against", default=None, help="Second expression for the span oracle")
                if verb == 'confluence':
                    sub.add_argument("--samples", type=int, default=None)
                    sub.add_argument("--max-generators", type=int, default=None)
                    sub.add_argument("--seed", type=int, default=0)
                    sub.add_argument("--progress", action="store_true")
    return parser


def make_config(args: argparse.Namespace) -> CommandConfig:
    values: Dict[str, Any] = {k: v for k, v in vars(args).items()
                              if v is not None and k not in ('config', 'log_level', 'log_file')}
    values.setdefault('mode', ConfigManager.get('default_mode'))
    values['mode'] = MODE_ALIASES.get(values['mode'], values['mode'])
    values.setdefault('semantics', ConfigManager.get('default_semantics'))
    values.setdefault('jobs', ConfigManager.get('jobs'))
    return CommandConfig(**values)


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    config_data = ConfigManager.load_config(args.config)
    ConfigManager.activate(config_data)
    setup_logging(args.log_level or config_data.get('log_level', 'INFO'), args.log_file)

    try:
        config = make_config(args)
    except ValidationError as e:
        print(f"error: invalid arguments: {str(e)}", file=sys.stderr)
        return EXIT_USAGE

    try:
        return COMMANDS[config.command](config)
    except BudgetExhaustedError as e:
        logger.warning(f"Search budget exhausted: {str(e)}")
        print(f"error: {str(e)}", file=sys.stderr)
        return EXIT_EXHAUSTED
    except (GroupoidifyError, ValueError) as e:
        logger.error(f"Failed to run {config.command} {config.action}: {str(e)}")
        print(f"error: {str(e)}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(run())
