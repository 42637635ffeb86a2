"""Hinge-loss soft-logic engine: rule DSL, grounding, convex MAP inference.

Rules are weighted implications over first-order literals::

    # comment
    open pos/1
    closed Coalition/2
    1.0 : Coalition(a, b) & pos(a) -> pos(b)

Grammar per rule line: ``[<weight> :] <literal> ('&' <literal>)* '->'
<literal>`` with ``<literal> ::= ['!'] Name '(' var (',' var)* ')'``.
Unicode connectives are accepted for ``&`` (``∧``), ``!`` (``¬``) and ``->``
(``→``).  An optional trailing ``^1`` or ``^2`` overrides the hinge exponent
(default 2).  Undeclared predicates are auto-declared closed with the arity
of first use.

Semantics: atom values live in [0, 1].  A ground rule with body literals
b_1..b_n and head h is scored by its distance to satisfaction

    d = max(b_1 + ... + b_n - h - (n - 1), 0)

(the Lukasiewicz implication residual; a negated literal contributes one
minus its atom value).  This equals clamping the Lukasiewicz AND of the body
first, since h >= 0.  The MAP state minimizes the energy
``sum_r weight_r * d_r ** exponent_r`` over the free atoms, a convex box
problem solved by projected gradient descent.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

Atom = tuple[str, tuple[str, ...]]


class RuleSyntaxError(ValueError):
    """Raised on malformed rule text; names line and column."""


class GroundingError(ValueError):
    """Raised when a program cannot be grounded against a database."""


@dataclass(frozen=True)
class Predicate:
    name: str
    arity: int
    closed: bool


@dataclass(frozen=True)
class Literal:
    predicate: str
    args: tuple[str, ...]
    negated: bool = False

    def __str__(self):
        inner = f"{self.predicate}({', '.join(self.args)})"
        return f"!{inner}" if self.negated else inner


@dataclass(frozen=True)
class Rule:
    weight: float
    body: tuple[Literal, ...]
    head: Literal
    exponent: int = 2

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError(f"rule weight must be nonnegative, got {self.weight}")
        if self.exponent not in (1, 2):
            raise ValueError(f"rule exponent must be 1 or 2, got {self.exponent}")
        if not self.body:
            raise ValueError("rule must have at least one body literal")
        body_vars = {v for lit in self.body for v in lit.args}
        missing = [v for v in self.head.args if v not in body_vars]
        if missing:
            raise ValueError(f"head variable(s) {missing} do not appear in the body")


@dataclass
class PslProgram:
    predicates: dict[str, Predicate]
    rules: list[Rule]

    def __eq__(self, other):
        if not isinstance(other, PslProgram):
            return NotImplemented
        return self.predicates == other.predicates and self.rules == other.rules

    def subset(self, indices: Iterable[int]) -> "PslProgram":
        """Same predicates, only the selected rules (ablation support)."""
        return PslProgram(dict(self.predicates), [self.rules[i] for i in indices])


_DECL_RE = re.compile(r"^(open|closed)\s+([A-Za-z_]\w*)\s*/\s*(\d+)\s*$")
_TOKEN_RE = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<number>-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_]\w*)"
    r"|(?P<arrow>->|→)"
    r"|(?P<amp>&|∧)"
    r"|(?P<bang>!|¬)"
    r"|(?P<colon>:)"
    r"|(?P<lparen>\()"
    r"|(?P<rparen>\))"
    r"|(?P<comma>,)"
    r"|(?P<caret>\^)"
)


def _tokenize(line: str, lineno: int) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(line):
        m = _TOKEN_RE.match(line, pos)
        if m is None:
            raise RuleSyntaxError(
                f"line {lineno}, column {pos + 1}: unexpected character {line[pos]!r}"
            )
        pos = m.end()
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), m.start() + 1))
    return tokens


class _RuleParser:
    """Recursive descent over one rule line's tokens."""

    def __init__(self, tokens, lineno):
        self.tokens = tokens
        self.lineno = lineno
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else (None, "", -1)

    def take(self, kind):
        got_kind, text, col = self.peek()
        if got_kind != kind:
            where = f"line {self.lineno}, column {col}" if col >= 0 else f"line {self.lineno}, end"
            raise RuleSyntaxError(f"{where}: expected {kind}, got {text!r}")
        self.pos += 1
        return text, col

    def parse(self) -> Rule:
        weight = 1.0
        if self.peek()[0] == "number" and self.tokens[self.pos + 1 : self.pos + 2] and \
                self.tokens[self.pos + 1][0] == "colon":
            text, col = self.take("number")
            weight = float(text)
            if weight < 0:
                raise RuleSyntaxError(
                    f"line {self.lineno}, column {col}: negative weight {text}"
                )
            self.take("colon")
        literals = [self.literal()]
        while self.peek()[0] == "amp":
            self.take("amp")
            literals.append(self.literal())
        self.take("arrow")
        head = self.literal()
        exponent = 2
        if self.peek()[0] == "caret":
            self.take("caret")
            text, col = self.take("number")
            if text not in ("1", "2"):
                raise RuleSyntaxError(
                    f"line {self.lineno}, column {col}: exponent must be 1 or 2"
                )
            exponent = int(text)
        if self.pos != len(self.tokens):
            _, text, col = self.peek()
            raise RuleSyntaxError(
                f"line {self.lineno}, column {col}: trailing input {text!r}"
            )
        try:
            return Rule(weight=weight, body=tuple(literals), head=head, exponent=exponent)
        except ValueError as exc:
            raise RuleSyntaxError(f"line {self.lineno}: {exc}") from None

    def literal(self) -> Literal:
        negated = False
        if self.peek()[0] == "bang":
            self.take("bang")
            negated = True
        name, _ = self.take("name")
        self.take("lparen")
        args = [self.take("name")[0]]
        while self.peek()[0] == "comma":
            self.take("comma")
            args.append(self.take("name")[0])
        self.take("rparen")
        return Literal(predicate=name, args=tuple(args), negated=negated)


def parse_program(text: str) -> PslProgram:
    """Parse a full program: declarations, comments and rules."""
    predicates: dict[str, Predicate] = {}
    rules: list[Rule] = []

    def register(name: str, arity: int, lineno: int):
        known = predicates.get(name)
        if known is None:
            predicates[name] = Predicate(name, arity, closed=True)
        elif known.arity != arity:
            raise RuleSyntaxError(
                f"line {lineno}: predicate {name} used with arity {arity}, "
                f"declared with {known.arity}"
            )

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        decl = _DECL_RE.match(line.strip())
        if decl:
            kind, name, arity = decl.group(1), decl.group(2), int(decl.group(3))
            known = predicates.get(name)
            closed = kind == "closed"
            if known is not None and (known.arity != arity or known.closed != closed):
                raise RuleSyntaxError(
                    f"line {lineno}: conflicting declaration for predicate {name}"
                )
            predicates[name] = Predicate(name, arity, closed=closed)
            continue
        rule = _RuleParser(_tokenize(line, lineno), lineno).parse()
        for lit in rule.body + (rule.head,):
            register(lit.predicate, len(lit.args), lineno)
        rules.append(rule)
    return PslProgram(predicates, rules)


def load_program(path) -> PslProgram:
    from pathlib import Path

    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"program file not found: {path}")
    return parse_program(path.read_text(encoding="utf-8"))


def print_program(program: PslProgram) -> str:
    """Canonical text form; ``parse_program`` of it reproduces the program."""
    lines = []
    for pred in program.predicates.values():
        kind = "closed" if pred.closed else "open"
        lines.append(f"{kind} {pred.name}/{pred.arity}")
    if program.rules:
        lines.append("")
    for rule in program.rules:
        body = " & ".join(str(lit) for lit in rule.body)
        suffix = " ^1" if rule.exponent == 1 else ""
        lines.append(f"{rule.weight!r} : {body} -> {rule.head}{suffix}")
    return "\n".join(lines) + "\n"


class RelationalDatabase:
    """Observed atom values plus the open atoms to infer.

    Closed-world: an atom that is neither observed nor a target reads as 0.
    Each atom may be observed once, or be a target, never both.
    """

    def __init__(self):
        self.observations: dict[Atom, float] = {}
        self.targets: dict[Atom, float | None] = {}

    @staticmethod
    def _atom(predicate: str, args: Sequence[str]) -> Atom:
        return (predicate, tuple(str(a) for a in args))

    def observe(self, predicate: str, args: Sequence[str], value: float) -> None:
        value = float(value)
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"atom value must be in [0, 1], got {value}")
        atom = self._atom(predicate, args)
        if atom in self.observations:
            raise ValueError(f"atom {atom} observed twice")
        if atom in self.targets:
            raise ValueError(f"atom {atom} is already a target")
        self.observations[atom] = value

    def add_target(self, predicate: str, args: Sequence[str], initial: float | None = None) -> None:
        atom = self._atom(predicate, args)
        if atom in self.targets:
            raise ValueError(f"duplicate target {atom}")
        if atom in self.observations:
            raise ValueError(f"atom {atom} is already observed")
        if initial is not None and not 0.0 <= initial <= 1.0:
            raise ValueError(f"initial value must be in [0, 1], got {initial}")
        self.targets[atom] = initial

    def atoms_of(self, predicate: str) -> list[Atom]:
        return [a for a in self.observations if a[0] == predicate] + [
            a for a in self.targets if a[0] == predicate
        ]


@dataclass(frozen=True)
class GroundLiteral:
    predicate: str
    args: tuple[str, ...]
    negated: bool
    free_index: int | None  # index into the network's free atoms, or None
    observed_value: float | None  # fixed value when not free

    @property
    def atom(self) -> Atom:
        return (self.predicate, self.args)


@dataclass(frozen=True)
class GroundRule:
    weight: float
    exponent: int
    body: tuple[GroundLiteral, ...]
    head: GroundLiteral


def _effective(lit: GroundLiteral, values: np.ndarray) -> float:
    if lit.free_index is not None:
        v = float(values[lit.free_index])
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"assignment value {v} outside [0, 1]")
    else:
        v = lit.observed_value
    return 1.0 - v if lit.negated else v


def distance_to_satisfaction(rule: GroundRule, values: np.ndarray | Sequence[float]) -> float:
    """Hinge residual of one ground rule under an assignment to free atoms.

    Evaluated left to right as (sum of body truths) - head - (n - 1) so the
    result matches the closed-form arithmetic bit for bit.
    """
    values = np.asarray(values, dtype=np.float64)
    total = 0.0
    for lit in rule.body:
        total = total + _effective(lit, values)
    linear = total - _effective(rule.head, values) - (len(rule.body) - 1)
    return linear if linear > 0.0 else 0.0


class GroundNetwork:
    """Ground rules over indexed free atoms, with compiled energy arrays."""

    def __init__(self, free_atoms: Sequence[Atom], initial: np.ndarray,
                 rules: Sequence[GroundRule]):
        self.free_atoms = tuple(free_atoms)
        self.free_index = {a: i for i, a in enumerate(self.free_atoms)}
        self.initial = np.asarray(initial, dtype=np.float64)
        self.rules = list(rules)
        self._compiled = None

    def __len__(self):
        return len(self.rules)

    def compiled(self):
        if self._compiled is None:
            self._compiled = _compile(self)
        return self._compiled

    def energy(self, values: np.ndarray | Sequence[float]) -> float:
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (len(self.free_atoms),):
            raise ValueError(
                f"assignment must have shape ({len(self.free_atoms)},), got {values.shape}"
            )
        if len(values) and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError("assignment values must lie in [0, 1]")
        return self.compiled().energy(values)

    def values_by_atom(self, values: np.ndarray) -> dict[Atom, float]:
        return {atom: float(values[i]) for atom, i in self.free_index.items()}


class _Compiled:
    """Flat arrays for vectorized energy and gradient."""

    def __init__(self, consts, weights, rhos, entry_rule, entry_free, entry_coef, n_free):
        self.consts = consts
        self.weights = weights
        self.rhos = rhos
        self.entry_rule = entry_rule
        self.entry_free = entry_free
        self.entry_coef = entry_coef
        self.n_free = n_free

    def linear(self, x: np.ndarray) -> np.ndarray:
        if len(self.entry_rule):
            sums = np.bincount(
                self.entry_rule,
                weights=self.entry_coef * x[self.entry_free],
                minlength=len(self.consts),
            )
        else:
            sums = np.zeros(len(self.consts))
        return self.consts + sums

    def energy(self, x: np.ndarray) -> float:
        d = np.maximum(self.linear(x), 0.0)
        return float(np.sum(self.weights * np.where(self.rhos == 1, d, d * d)))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        d = np.maximum(self.linear(x), 0.0)
        # d(w * d^rho)/d(linear): rho=1 -> w on the active set, rho=2 -> 2 w d
        slope = np.where(self.rhos == 1, self.weights * (d > 0), 2.0 * self.weights * d)
        if not len(self.entry_rule):
            return np.zeros(self.n_free)
        return np.bincount(
            self.entry_free,
            weights=self.entry_coef * slope[self.entry_rule],
            minlength=self.n_free,
        )

    def smoothed_energy(self, x: np.ndarray, mu: float) -> float:
        """Energy with linear hinges replaced by their Huber smoothing.

        max(u, 0) becomes u^2/(2 mu) on (0, mu] and u - mu/2 beyond, which
        is convex, C^1, and underestimates the hinge by at most mu/2 per
        rule.  Squared hinges are already C^1 and stay exact.
        """
        u = self.linear(x)
        d = np.maximum(u, 0.0)
        huber = np.where(u <= mu, d * d / (2.0 * mu), u - mu / 2.0)
        return float(np.sum(self.weights * np.where(self.rhos == 1, huber, d * d)))

    def smoothed_gradient(self, x: np.ndarray, mu: float) -> np.ndarray:
        u = self.linear(x)
        d = np.maximum(u, 0.0)
        slope = np.where(
            self.rhos == 1,
            self.weights * np.minimum(d / mu, 1.0),
            2.0 * self.weights * d,
        )
        if not len(self.entry_rule):
            return np.zeros(self.n_free)
        return np.bincount(
            self.entry_free,
            weights=self.entry_coef * slope[self.entry_rule],
            minlength=self.n_free,
        )


def _compile(network: GroundNetwork) -> _Compiled:
    consts, weights, rhos = [], [], []
    entry_rule, entry_free, entry_coef = [], [], []
    for r, rule in enumerate(network.rules):
        const = -(len(rule.body) - 1.0)
        for lit, head in [(l, False) for l in rule.body] + [(rule.head, True)]:
            sign = -1.0 if head else 1.0
            if lit.negated:
                const += sign * 1.0
                coef = -sign
            else:
                coef = sign
            if lit.free_index is not None:
                entry_rule.append(r)
                entry_free.append(lit.free_index)
                entry_coef.append(coef)
            else:
                const += coef * lit.observed_value
        consts.append(const)
        weights.append(rule.weight)
        rhos.append(rule.exponent)
    return _Compiled(
        np.asarray(consts),
        np.asarray(weights),
        np.asarray(rhos),
        np.asarray(entry_rule, dtype=np.intp),
        np.asarray(entry_free, dtype=np.intp),
        np.asarray(entry_coef),
        len(network.free_atoms),
    )


def energy(network: GroundNetwork, values) -> float:
    return network.energy(values)


def _binder_pools(program: PslProgram, db: RelationalDatabase):
    """Candidate ground atoms per predicate, split by role."""
    observed_by_pred: dict[str, list[Atom]] = {}
    for atom, value in db.observations.items():
        observed_by_pred.setdefault(atom[0], []).append(atom)
    targets_by_pred: dict[str, list[Atom]] = {}
    for atom in db.targets:
        targets_by_pred.setdefault(atom[0], []).append(atom)
    pools: dict[str, list[Atom]] = {}
    for name, pred in program.predicates.items():
        if pred.closed:
            # positive closed literals can only hold on observed atoms > 0
            pools[name] = [
                a for a in observed_by_pred.get(name, []) if db.observations[a] > 0.0
            ]
        else:
            pools[name] = targets_by_pred.get(name, []) + observed_by_pred.get(name, [])
    return pools


def _check_arities(program: PslProgram, db: RelationalDatabase):
    for atom in list(db.observations) + list(db.targets):
        pred = program.predicates.get(atom[0])
        if pred is not None and pred.arity != len(atom[1]):
            raise GroundingError(
                f"atom {atom} does not match declared arity {pred.arity} of {atom[0]}"
            )


def ground(program: PslProgram, db: RelationalDatabase) -> GroundNetwork:
    """Instantiate every rule against the database.

    One ground rule per satisfiable substitution.  Exact prunes, all cases
    where the rule's distance is identically zero over the free atoms:
    provably-zero bodies, heads repeated in the body (tautologies), and
    fully observed rules (constants).  Variables bind through positive
    closed literals or open literals; a variable appearing only in negated
    closed literals ranges over the constants its predicates were observed
    with at that argument position, and raises if there are none.
    """
    _check_arities(program, db)
    for name, pred in program.predicates.items():
        if not pred.closed:
            used = any(
                lit.predicate == name
                for rule in program.rules
                for lit in rule.body + (rule.head,)
            )
            if used and not any(a[0] == name for a in db.targets):
                raise GroundingError(
                    f"open predicate {name} has no target declaration in the database"
                )
    pools = _binder_pools(program, db)
    all_observed: dict[str, list[Atom]] = {}
    for atom in db.observations:
        all_observed.setdefault(atom[0], []).append(atom)

    def pool_for(lit: Literal) -> list[Atom]:
        if program.predicates[lit.predicate].closed and lit.negated:
            return all_observed.get(lit.predicate, [])
        return pools[lit.predicate]

    free_atoms = list(db.targets)
    free_index = {a: i for i, a in enumerate(free_atoms)}
    initial = np.array(
        [0.5 if v is None else v for v in db.targets.values()], dtype=np.float64
    )

    def ground_literal(lit: Literal, sub: dict[str, str]) -> GroundLiteral | None:
        atom = (lit.predicate, tuple(sub[v] for v in lit.args))
        if atom in free_index:
            return GroundLiteral(atom[0], atom[1], lit.negated, free_index[atom], None)
        if atom in db.observations:
            return GroundLiteral(atom[0], atom[1], lit.negated, None, db.observations[atom])
        if program.predicates[lit.predicate].closed:
            return GroundLiteral(atom[0], atom[1], lit.negated, None, 0.0)
        return None  # open atom that was never declared

    ground_rules: list[GroundRule] = []
    stats = {"body_zero": 0, "tautology": 0, "constant": 0, "missing_head": 0}
    for rule in program.rules:
        binders = [
            lit
            for lit in rule.body
            if not (program.predicates[lit.predicate].closed and lit.negated)
        ]
        rule_vars = {v for lit in rule.body for v in lit.args}
        bindable = {v for lit in binders for v in lit.args}
        unbindable = sorted(rule_vars - bindable)
        substitutions: list[dict[str, str]] = [dict()]
        bound: set[str] = set()
        if unbindable:
            var_pools: dict[str, set[str]] = {v: set() for v in unbindable}
            for lit in rule.body:
                for i, v in enumerate(lit.args):
                    if v in var_pools:
                        for atom in all_observed.get(lit.predicate, []):
                            var_pools[v].add(atom[1][i])
            empty = [v for v in unbindable if not var_pools[v]]
            if empty:
                raise GroundingError(
                    f"variable(s) {empty} appear only in negated literals of "
                    f"predicates with no observed atoms: {rule}"
                )
            for v in unbindable:
                substitutions = [
                    dict(sub, **{v: const})
                    for sub in substitutions
                    for const in sorted(var_pools[v])
                ]
            bound.update(unbindable)
        remaining = list(binders)
        while remaining and substitutions:
            # prefer literals that reuse already-bound variables, then small pools
            remaining.sort(
                key=lambda lit: (
                    -sum(1 for v in lit.args if v in bound),
                    len(pools[lit.predicate]),
                )
            )
            lit = remaining.pop(0)
            bound_positions = [i for i, v in enumerate(lit.args) if v in bound]
            index: dict[tuple, list[Atom]] = {}
            for atom in pools[lit.predicate]:
                if len(atom[1]) != len(lit.args):
                    continue
                key = tuple(atom[1][i] for i in bound_positions)
                index.setdefault(key, []).append(atom)
            new_subs = []
            for sub in substitutions:
                key = tuple(sub[lit.args[i]] for i in bound_positions)
                for atom in index.get(key, ()):
                    extended = dict(sub)
                    ok = True
                    for var, const in zip(lit.args, atom[1]):
                        if var in extended and extended[var] != const:
                            ok = False
                            break
                        extended[var] = const
                    if ok:
                        new_subs.append(extended)
            substitutions = new_subs
            bound.update(lit.args)
        for sub in substitutions:
            body = []
            for lit in rule.body:
                gl = ground_literal(lit, sub)
                if gl is None:
                    body = None
                    break
                body.append(gl)
            if body is None:
                stats["missing_head"] += 1
                continue
            head = ground_literal(rule.head, sub)
            if head is None:
                stats["missing_head"] += 1
                continue
            if any(
                gl.atom == head.atom and gl.negated == head.negated for gl in body
            ):
                stats["tautology"] += 1
                continue
            fixed = [gl for gl in body if gl.free_index is None]
            fixed_sum = sum(
                (1.0 - gl.observed_value) if gl.negated else gl.observed_value
                for gl in fixed
            )
            if fixed_sum <= len(fixed) - 1:
                stats["body_zero"] += 1
                continue
            if head.free_index is None and not any(gl.free_index is not None for gl in body):
                stats["constant"] += 1
                continue
            ground_rules.append(
                GroundRule(rule.weight, rule.exponent, tuple(body), head)
            )
    log.info(
        "grounded %d rules over %d free atoms (pruned: %s)",
        len(ground_rules),
        len(free_atoms),
        stats,
    )
    return GroundNetwork(free_atoms, initial, ground_rules)


@dataclass
class SolverConfig:
    max_iterations: int = 50_000
    tolerance: float = 1e-9
    initial_step: float = 0.25
    smoothing_initial: float = 0.1
    smoothing_final: float = 1e-8
    smoothing_decay: float = 0.1


@dataclass
class MapResult:
    values: np.ndarray
    energy: float
    iterations: int
    converged: bool


def map_inference(
    network: GroundNetwork,
    config: SolverConfig | None = None,
    initial: np.ndarray | Mapping[Atom, float] | None = None,
) -> MapResult:
    """Minimize the network energy over [0, 1]^n by projected gradient.

    Plain (sub)gradient steps stall on this energy: at a kink where a
    high-weight hinge is exactly tight, the negative subgradient crosses
    the hinge plane and every step raises the energy.  The solver instead
    minimizes a sequence of smoothed energies (linear hinges Huberized
    with width mu), shrinking mu geometrically and warm-starting each
    level.  The smoothed energy underestimates the true one by at most
    mu/2 per linear rule, so the final level pins the gap well below any
    reported tolerance.  Each level runs monotone backtracking descent
    until the improvement falls under the tolerance; the result reports
    the exact (unsmoothed) energy of the best iterate.
    """
    config = config or SolverConfig()
    n = len(network.free_atoms)
    if initial is None:
        x = network.initial.copy()
    elif isinstance(initial, Mapping):
        x = network.initial.copy()
        for atom, value in initial.items():
            x[network.free_index[atom]] = value
    else:
        x = np.asarray(initial, dtype=np.float64).copy()
        if x.shape != (n,):
            raise ValueError(f"initial values must have shape ({n},)")
    np.clip(x, 0.0, 1.0, out=x)
    if n == 0 or not network.rules:
        return MapResult(x, network.energy(x), 0, True)
    if not (0.0 < config.smoothing_decay < 1.0):
        raise ValueError("smoothing_decay must lie in (0, 1)")

    levels = []
    mu = config.smoothing_initial
    while mu > config.smoothing_final:
        levels.append(mu)
        mu *= config.smoothing_decay
    levels.append(config.smoothing_final)

    comp = network.compiled()
    best_x, best_f = x.copy(), comp.energy(x)
    iterations = 0
    converged = True
    for mu in levels:
        f = comp.smoothed_energy(x, mu)
        step = config.initial_step
        stall_count = 0
        while True:
            if iterations >= config.max_iterations:
                converged = False
                break
            g = comp.smoothed_gradient(x, mu)
            iterations += 1
            if float(np.linalg.norm(g)) == 0.0:
                break
            s = step
            accepted = False
            for _ in range(40):
                xn = np.clip(x - s * g, 0.0, 1.0)
                if not np.any(xn != x):
                    break
                fn = comp.smoothed_energy(xn, mu)
                if fn < f - 1e-15:
                    accepted = True
                    break
                s *= 0.5
            if not accepted:
                break  # projected stationary point of the smoothed energy
            delta = f - fn
            x, f = xn, fn
            step = min(s * 2.0, 4.0)
            if delta < config.tolerance:
                stall_count += 1
                if stall_count >= 3:
                    break
            else:
                stall_count = 0
        exact = comp.energy(x)
        if exact < best_f:
            best_f, best_x = exact, x.copy()
        if not converged:
            break
    return MapResult(best_x, best_f, iterations, converged)
