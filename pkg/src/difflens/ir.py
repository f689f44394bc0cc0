"""Function IR: the normalized, analyzable form of an API implementation.

IR documents are line-oriented text (grammar in docs/ir-format.md); a corpus
is a directory of `<api_name>.ir` files, optionally with
`<api_name>.counterpart.ir` documents describing the counterpart side.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from pathlib import Path

from .constraints import ArgKind, ArgumentSpec, ApiSpec, Call, ConstraintExpr, Lit, referenced_args
from .grammar import ConstraintSyntaxError, parse_constraint


class IRError(ValueError):
    """Parse or validation failure, with line diagnostics."""

    def __init__(self, message: str, line: int | None = None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line


class CheckKind(enum.Enum):
    ASSERT = "assert"
    TORCH_CHECK = "torch_check"
    OP_REQUIRES = "op_requires"
    ARGS_TO_MATCHING_EAGER = "args_to_matching_eager"


@dataclass
class Stmt:
    sid: int = field(init=False, default=-1)
    line: int = field(init=False, default=0)


@dataclass
class Assign(Stmt):
    target: str
    expr: ConstraintExpr


@dataclass
class CallStmt(Stmt):
    target: str | None
    callee: str
    args: tuple[ConstraintExpr, ...]
    external: bool = True


@dataclass
class SanityCheck(Stmt):
    kind: CheckKind
    args: tuple[ConstraintExpr, ...]


@dataclass
class If(Stmt):
    cond: ConstraintExpr
    then: tuple[Stmt, ...] = ()
    orelse: tuple[Stmt, ...] = ()


@dataclass
class Loop(Stmt):
    cond: ConstraintExpr
    body: tuple[Stmt, ...] = ()


@dataclass
class Return(Stmt):
    expr: ConstraintExpr | None = None


@dataclass(frozen=True)
class FunctionIR:
    name: str
    params: tuple[ArgumentSpec, ...]
    body: tuple[Stmt, ...]

    @property
    def signature(self) -> ApiSpec:
        return ApiSpec(self.name, self.params)

    def statements(self):
        """All statements in preorder."""
        def rec(block):
            for s in block:
                yield s
                if isinstance(s, If):
                    yield from rec(s.then)
                    yield from rec(s.orelse)
                elif isinstance(s, Loop):
                    yield from rec(s.body)
        yield from rec(self.body)


@dataclass(frozen=True)
class PathStep:
    """One statement on a path; `taken` is set for If steps only."""

    stmt: Stmt
    taken: bool | None = None


@dataclass(frozen=True)
class ExecutionPath:
    path_id: str
    steps: tuple[PathStep, ...]


class PathExplosionError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

_FN_RE = re.compile(r"^fn\s+([A-Za-z_][A-Za-z0-9_]*)\s*$")
_PARAM_RE = re.compile(r"^param\s+([A-Za-z_][A-Za-z0-9_]*)\s+([a-z-]+)(?:\s*=\s*(.+))?$")
_ASSIGN_RE = re.compile(r"^assign\s+([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.+)$")
_CALL_RE = re.compile(r"^call\s+(?:([A-Za-z_][A-Za-z0-9_]*)\s*=\s*)?(.+)$")
_CHECK_RE = re.compile(r"^check\s+(.+)$")

_KIND_NAMES = {k.value: k for k in ArgKind}
_CHECK_NAMES = {k.value: k for k in CheckKind}

# which sanity-check arguments are condition-bearing (use-checked)
_CHECK_COND_INDEX = {
    CheckKind.ASSERT: 0,
    CheckKind.TORCH_CHECK: 0,
    CheckKind.OP_REQUIRES: 1,
    CheckKind.ARGS_TO_MATCHING_EAGER: 0,
}


def _parse_expr(text: str, line: int) -> ConstraintExpr:
    try:
        return parse_constraint(text)
    except ConstraintSyntaxError as exc:
        raise IRError(str(exc), line) from exc


def load_ir(document: str | bytes, known_callees: frozenset[str] = frozenset()) -> FunctionIR:
    """Parse and validate one IR document."""
    if isinstance(document, bytes):
        document = document.decode("utf-8")
    name: str | None = None
    params: list[ArgumentSpec] = []
    # block stack: list of (kind, statement-or-None, current-list)
    root: list[Stmt] = []
    stack: list[tuple[str, Stmt | None, list[Stmt]]] = [("body", None, root)]
    sid = 0

    def push(stmt: Stmt, line_no: int) -> Stmt:
        nonlocal sid
        stmt.sid = sid
        stmt.line = line_no
        sid += 1
        stack[-1][2].append(stmt)
        return stmt

    for line_no, raw in enumerate(document.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if name is None:
            m = _FN_RE.match(line)
            if not m:
                raise IRError("document must start with `fn <name>`", line_no)
            name = m.group(1)
            continue
        if line.startswith("param "):
            if root or len(stack) > 1:
                raise IRError("param lines must precede the body", line_no)
            m = _PARAM_RE.match(line)
            if not m:
                raise IRError("bad param line", line_no)
            pname, kind_name, default = m.group(1), m.group(2), m.group(3)
            if kind_name not in _KIND_NAMES:
                raise IRError(f"unknown argument kind {kind_name!r}", line_no)
            default_value = None
            if default is not None:
                lit = _parse_expr(default, line_no)
                if not isinstance(lit, Lit):
                    raise IRError("param default must be a literal", line_no)
                default_value = lit.value
            if any(p.name == pname for p in params):
                raise IRError(f"duplicate param {pname!r}", line_no)
            params.append(ArgumentSpec(pname, _KIND_NAMES[kind_name], default_value))
            continue
        m = _ASSIGN_RE.match(line)
        if m:
            push(Assign(m.group(1), _parse_expr(m.group(2), line_no)), line_no)
            continue
        m = _CHECK_RE.match(line)
        if m:
            expr = _parse_expr(m.group(1), line_no)
            if not isinstance(expr, Call) or expr.name not in _CHECK_NAMES:
                known = ", ".join(sorted(_CHECK_NAMES))
                raise IRError(f"check must call one of: {known}", line_no)
            push(SanityCheck(_CHECK_NAMES[expr.name], expr.args), line_no)
            continue
        if line.startswith("call "):
            m = _CALL_RE.match(line)
            if not m:
                raise IRError("bad call statement", line_no)
            call_expr = _parse_expr(m.group(2), line_no)
            if not isinstance(call_expr, Call):
                raise IRError("call statement requires `callee(args)`", line_no)
            push(
                CallStmt(m.group(1), call_expr.name, call_expr.args,
                         external=call_expr.name not in known_callees),
                line_no,
            )
            continue
        if line.startswith("if "):
            stmt = push(If(_parse_expr(line[3:], line_no)), line_no)
            stack.append(("then", stmt, []))
            continue
        if line == "else":
            kind, stmt, block = stack.pop()
            if kind != "then":
                raise IRError("`else` outside an if", line_no)
            stmt.then = tuple(block)
            stack.append(("else", stmt, []))
            continue
        if line.startswith("loop "):
            stmt = push(Loop(_parse_expr(line[5:], line_no)), line_no)
            stack.append(("loop", stmt, []))
            continue
        if line == "end":
            if len(stack) == 1:
                raise IRError("`end` without an open block", line_no)
            kind, stmt, block = stack.pop()
            if kind == "then":
                stmt.then = tuple(block)
            elif kind == "else":
                stmt.orelse = tuple(block)
            else:
                stmt.body = tuple(block)
            continue
        if line == "return":
            push(Return(None), line_no)
            continue
        if line.startswith("return "):
            push(Return(_parse_expr(line[7:], line_no)), line_no)
            continue
        raise IRError(f"unrecognized statement {line!r}", line_no)

    if name is None:
        raise IRError("empty document")
    if len(stack) != 1:
        raise IRError("unterminated block (missing `end`)")
    ir = FunctionIR(name, tuple(params), tuple(root))
    _validate_uses(ir)
    return ir


def _expr_uses(expr: ConstraintExpr) -> set[str]:
    names = referenced_args(expr)
    # note: dtype-list containers (`call list`) may carry bare names too
    return names


def _validate_uses(ir: FunctionIR):
    """Every variable used must be a param or a previously assigned local."""
    defined = {p.name for p in ir.params}
    errors: list[str] = []

    def check_expr(expr: ConstraintExpr, stmt: Stmt):
        for n in sorted(_expr_uses(expr)):
            if n not in defined:
                errors.append(f"line {stmt.line}: use of undefined variable {n!r}")

    def rec(block):
        for s in block:
            if isinstance(s, Assign):
                check_expr(s.expr, s)
                defined.add(s.target)
            elif isinstance(s, CallStmt):
                for a in s.args:
                    check_expr(a, s)
                if s.target:
                    defined.add(s.target)
            elif isinstance(s, SanityCheck):
                idx = _CHECK_COND_INDEX[s.kind]
                if idx < len(s.args):
                    check_expr(s.args[idx], s)
            elif isinstance(s, If):
                check_expr(s.cond, s)
                rec(s.then)
                rec(s.orelse)
            elif isinstance(s, Loop):
                check_expr(s.cond, s)
                rec(s.body)
            elif isinstance(s, Return) and s.expr is not None:
                check_expr(s.expr, s)

    rec(ir.body)
    if errors:
        raise IRError("; ".join(errors))


def load_corpus(directory: str | Path) -> dict[str, FunctionIR]:
    """Load every `.ir` document under a corpus directory.

    A statement-level call is external exactly when its callee is not defined
    by any document in the corpus.
    """
    directory = Path(directory)
    files = sorted(directory.glob("*.ir"))
    names: set[str] = set()
    for path in files:
        for line in path.read_text().splitlines():
            m = _FN_RE.match(line.split("#", 1)[0].strip())
            if m:
                names.add(m.group(1))
    corpus: dict[str, FunctionIR] = {}
    known = frozenset(names)
    for path in files:
        try:
            ir = load_ir(path.read_text(), known_callees=known)
        except IRError as exc:
            raise IRError(f"{path.name}: {exc}") from exc
        corpus[path.stem] = ir
    return corpus


# ---------------------------------------------------------------------------
# Path enumeration
# ---------------------------------------------------------------------------

DEFAULT_PATH_CAP = 4096


def enumerate_paths(ir: FunctionIR, cap: int = DEFAULT_PATH_CAP) -> list[ExecutionPath]:
    """One path per combination of If decisions, depth first with the then
    branch explored first. Loop bodies are included exactly once; `return`
    terminates a path. Raises PathExplosionError beyond `cap` paths."""
    paths: list[ExecutionPath] = []

    def emit(steps: list[PathStep]):
        if len(paths) >= cap:
            raise PathExplosionError(
                f"{ir.name}: path count exceeds cap of {cap}"
            )
        paths.append(ExecutionPath(f"{ir.name}/p{len(paths):04d}", tuple(steps)))

    def rec(block: tuple[Stmt, ...], i: int, steps: list[PathStep], cont):
        if i == len(block):
            cont(steps)
            return
        s = block[i]
        rest = lambda st: rec(block, i + 1, st, cont)
        if isinstance(s, (Assign, CallStmt, SanityCheck)):
            rest(steps + [PathStep(s)])
        elif isinstance(s, Return):
            emit(steps + [PathStep(s)])
        elif isinstance(s, If):
            rec(s.then, 0, steps + [PathStep(s, taken=True)], rest)
            rec(s.orelse, 0, steps + [PathStep(s, taken=False)], rest)
        elif isinstance(s, Loop):
            rec(s.body, 0, steps + [PathStep(s)], rest)
        else:  # pragma: no cover
            raise TypeError(f"unknown statement {s!r}")

    rec(ir.body, 0, [], emit)
    return paths
