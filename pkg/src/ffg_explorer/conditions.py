"""State conditions in disjunctive normal form over finite-domain variables.

A :class:`Condition` is a disjunction of :class:`Clause` objects, each a
conjunction of :class:`Atom` literals.  The empty clause list is ``False``;
a single empty clause is ``True``.  All constructors normalize, so two
normalized conditions that are structurally equal are logically equal.

Satisfiability and entailment are decided by exhaustive enumeration of the
variables a query mentions.  The full assignment space of the declarations
is capped at :data:`ENUMERATION_CAP`.
"""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

ENUMERATION_CAP = 2 ** 20

SCALAR_PREDICATES = ("eq", "neq")
SET_PREDICATES = ("contains", "not_contains")
NEGATED = {"eq": "neq", "neq": "eq", "contains": "not_contains", "not_contains": "contains"}

Value = Any  # bool | int | str | frozenset[str]
Valuation = Dict[str, Value]


class ConditionError(ValueError):
    pass


class UnboundVariableError(ConditionError):
    def __init__(self, var: str):
        super().__init__(f"unbound variable {var!r}")
        self.var = var


class EnumerationCapExceeded(ConditionError):
    def __init__(self, size: int):
        super().__init__(f"assignment space of {size} exceeds enumeration cap {ENUMERATION_CAP}")
        self.size = size


class ParseError(ConditionError):
    pass


# ---------------------------------------------------------------------------
# Declarations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VarDecl:
    """A finite-domain state variable.

    ``kind`` is one of ``boolean``, ``enum``, ``int_range`` or ``set_of``.
    ``values`` holds the enum labels or the set universe.
    """

    name: str
    kind: str
    values: Tuple[Any, ...] = ()
    lo: int = 0
    hi: int = 0

    def __post_init__(self):
        if self.kind not in ("boolean", "enum", "int_range", "set_of"):
            raise ConditionError(f"{self.name}: unknown domain kind {self.kind!r}")
        if self.kind in ("enum", "set_of"):
            deduped = tuple(dict.fromkeys(self.values))
            object.__setattr__(self, "values", deduped)
            if self.kind == "enum" and not deduped:
                raise ConditionError(f"{self.name}: empty enum domain")
        if self.kind == "int_range" and self.lo > self.hi:
            raise ConditionError(f"{self.name}: lo > hi")

    @property
    def is_set(self) -> bool:
        return self.kind == "set_of"

    def size(self) -> int:
        if self.kind == "boolean":
            return 2
        if self.kind == "enum":
            return len(self.values)
        if self.kind == "int_range":
            return self.hi - self.lo + 1
        return 2 ** len(self.values)

    def domain(self) -> List[Value]:
        if self.kind == "boolean":
            return [False, True]
        if self.kind == "enum":
            return list(self.values)
        if self.kind == "int_range":
            return list(range(self.lo, self.hi + 1))
        subsets = []
        for r in range(len(self.values) + 1):
            subsets.extend(frozenset(c) for c in itertools.combinations(self.values, r))
        return subsets

    def admits(self, value: Value) -> bool:
        if self.kind == "boolean":
            return isinstance(value, bool)
        if self.kind == "enum":
            return value in self.values
        if self.kind == "int_range":
            return isinstance(value, int) and not isinstance(value, bool) and self.lo <= value <= self.hi
        return isinstance(value, frozenset) and value <= frozenset(self.values)

    def admits_operand(self, predicate: str, operand: Any) -> bool:
        if self.is_set:
            return predicate in SET_PREDICATES and operand in self.values
        return predicate in SCALAR_PREDICATES and self.admits(operand)


def space_size(decls: Iterable[VarDecl]) -> int:
    size = 1
    for d in decls:
        size *= d.size()
    return size


# ---------------------------------------------------------------------------
# Syntax
# ---------------------------------------------------------------------------


def render_operand(value: Any) -> str:
    return json.dumps(value)


@dataclass(frozen=True)
class Atom:
    var: str
    predicate: str
    operand: Any

    def __post_init__(self):
        if self.predicate not in NEGATED:
            raise ConditionError(f"unknown predicate {self.predicate!r}")

    @property
    def key(self) -> Tuple[str, str, str]:
        return (self.var, self.predicate, render_operand(self.operand))

    def __lt__(self, other: "Atom") -> bool:
        return self.key < other.key

    def negate(self) -> "Atom":
        return Atom(self.var, NEGATED[self.predicate], self.operand)

    def holds(self, val: Mapping[str, Value]) -> bool:
        try:
            v = val[self.var]
        except KeyError:
            raise UnboundVariableError(self.var) from None
        if self.predicate == "eq":
            return v == self.operand and type(v) is type(self.operand)
        if self.predicate == "neq":
            return not (v == self.operand and type(v) is type(self.operand))
        if self.predicate == "contains":
            return self.operand in v
        return self.operand not in v

    def render(self) -> str:
        op = render_operand(self.operand)
        if self.predicate == "eq":
            return f"{self.var} == {op}"
        if self.predicate == "neq":
            return f"{self.var} != {op}"
        if self.predicate == "contains":
            return f"{op} in {self.var}"
        return f"{op} not in {self.var}"


def _contradictory(a: Atom, b: Atom) -> bool:
    if a.var != b.var:
        return False
    if a.negate() == b:
        return True
    return (
        a.predicate == "eq"
        and b.predicate == "eq"
        and render_operand(a.operand) != render_operand(b.operand)
    )


@dataclass(frozen=True)
class Clause:
    """Conjunction of literals, kept sorted and duplicate-free."""

    literals: Tuple[Atom, ...] = ()

    @classmethod
    def of(cls, literals: Iterable[Atom]) -> "Clause":
        return cls(tuple(sorted(set(literals), key=lambda a: a.key)))

    @property
    def key(self) -> Tuple[Tuple[str, str, str], ...]:
        return tuple(a.key for a in self.literals)

    def holds(self, val: Mapping[str, Value]) -> bool:
        return all(a.holds(val) for a in self.literals)

    def is_contradictory(self) -> bool:
        lits = self.literals
        return any(_contradictory(a, b) for a, b in itertools.combinations(lits, 2))

    def simplified(self) -> "Clause":
        # eq(v,a) makes any neq(v,b), b != a, redundant
        eq_vars = {a.var: a for a in self.literals if a.predicate == "eq"}
        kept = [
            a
            for a in self.literals
            if not (
                a.predicate == "neq"
                and a.var in eq_vars
                and render_operand(eq_vars[a.var].operand) != render_operand(a.operand)
            )
        ]
        return Clause.of(kept)

    def render(self) -> str:
        if not self.literals:
            return "true"
        return " && ".join(a.render() for a in self.literals)

    def variables(self) -> set:
        return {a.var for a in self.literals}


@dataclass(frozen=True)
class Condition:
    clauses: Tuple[Clause, ...] = ()

    @classmethod
    def true(cls) -> "Condition":
        return cls((Clause(),))

    @classmethod
    def false(cls) -> "Condition":
        return cls(())

    @classmethod
    def of(cls, clauses: Iterable[Clause]) -> "Condition":
        return normalize(cls(tuple(clauses)))

    @classmethod
    def conj(cls, literals: Iterable[Atom]) -> "Condition":
        return cls.of([Clause.of(literals)])

    @property
    def is_true(self) -> bool:
        return len(self.clauses) == 1 and not self.clauses[0].literals

    @property
    def is_false(self) -> bool:
        return not self.clauses

    def variables(self) -> set:
        out = set()
        for c in self.clauses:
            out |= c.variables()
        return out

    def render(self) -> str:
        if not self.clauses:
            return "false"
        return " || ".join(c.render() for c in self.clauses)

    def __str__(self) -> str:
        return self.render()


def normalize(cond: Condition) -> Condition:
    """Canonical form: sorted literals and clauses, contradictions and subsumed clauses dropped."""
    clauses = []
    seen = set()
    for c in cond.clauses:
        c = Clause.of(c.literals).simplified()
        if c.is_contradictory() or c.key in seen:
            continue
        seen.add(c.key)
        clauses.append(c)
    clauses = _resolve(clauses)
    # a clause whose literal set contains another clause's is subsumed
    clauses.sort(key=lambda c: (len(c.literals), c.key))
    kept: List[Clause] = []
    for c in clauses:
        lits = set(c.literals)
        if any(set(k.literals) <= lits for k in kept):
            continue
        kept.append(c)
    kept.sort(key=lambda c: c.key)
    return Condition(tuple(kept))


def _resolve(clauses: List[Clause]) -> List[Clause]:
    """Merge clause pairs that differ only in one complementary literal: (a && R) || (!a && R) -> R."""
    changed = True
    while changed:
        changed = False
        keyed = {c.key: c for c in clauses}
        for c in sorted(keyed.values(), key=lambda c: c.key):
            for lit in c.literals:
                rest = [x for x in c.literals if x != lit]
                twin = Clause.of(rest + [lit.negate()]).simplified()
                if twin.key in keyed and twin.key != c.key:
                    merged = Clause.of(rest).simplified()
                    del keyed[c.key], keyed[twin.key]
                    keyed.setdefault(merged.key, merged)
                    changed = True
                    break
            if changed:
                break
        clauses = list(keyed.values())
    return clauses


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"""\s*(?:
        (?P<str>"(?:[^"\\]|\\.)*"|'[^']*')
      | (?P<num>-?\d+)
      | (?P<op>&&|\|\||==|!=)
      | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
    )""",
    re.VERBOSE,
)


def _tokenize(text: str) -> List[Tuple[str, str]]:
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected input at offset {pos}: {text[pos:pos + 12]!r}")
        kind = m.lastgroup
        tokens.append((kind, m.group(kind)))
        pos = m.end()
    return tokens


def _literal(kind: str, tok: str) -> Any:
    if kind == "str":
        if tok.startswith("'"):
            return tok[1:-1]
        return json.loads(tok)
    if kind == "num":
        return int(tok)
    if tok == "true":
        return True
    if tok == "false":
        return False
    raise ParseError(f"expected a literal, got {tok!r}")


def _parse_atom(toks: List[Tuple[str, str]]) -> Atom:
    if len(toks) == 3 and toks[1][0] == "op" and toks[0][0] == "ident":
        pred = "eq" if toks[1][1] == "==" else "neq"
        return Atom(toks[0][1], pred, _literal(*toks[2]))
    if len(toks) == 3 and toks[1] == ("ident", "in") and toks[2][0] == "ident":
        return Atom(toks[2][1], "contains", _literal(*toks[0]))
    if len(toks) == 4 and toks[1] == ("ident", "not") and toks[2] == ("ident", "in"):
        return Atom(toks[3][1], "not_contains", _literal(*toks[0]))
    raise ParseError("malformed atom: " + " ".join(t for _, t in toks))


def _split(toks, sep):
    parts, cur = [], []
    for t in toks:
        if t == ("op", sep):
            parts.append(cur)
            cur = []
        else:
            cur.append(t)
    parts.append(cur)
    return parts


def parse(text: str) -> Condition:
    """Parse the textual grammar (``true``, ``false``, ``v == lit``, ``lit in v``, ``&&``, ``||``)."""
    toks = _tokenize(text)
    if not toks:
        raise ParseError("empty condition")
    clauses = []
    for part in _split(toks, "||"):
        if part == [("ident", "false")]:
            continue
        if part == [("ident", "true")]:
            clauses.append(Clause())
            continue
        literals = []
        for atom_toks in _split(part, "&&"):
            if not atom_toks:
                raise ParseError("empty conjunct")
            if atom_toks == [("ident", "true")]:
                continue
            literals.append(_parse_atom(atom_toks))
        clauses.append(Clause.of(literals))
    return Condition.of(clauses)


# ---------------------------------------------------------------------------
# Semantics
# ---------------------------------------------------------------------------


def evaluate(cond: Condition, val: Mapping[str, Value]) -> bool:
    for var in sorted(cond.variables()):
        if var not in val:
            raise UnboundVariableError(var)
    return any(c.holds(val) for c in cond.clauses)


def check_condition(cond: Condition, decls: Mapping[str, VarDecl]) -> None:
    """Raise :class:`ConditionError` unless every atom fits its declared domain."""
    for c in cond.clauses:
        for a in c.literals:
            d = decls.get(a.var)
            if d is None:
                raise ConditionError(f"undeclared variable {a.var!r} in {cond.render()!r}")
            if not d.admits_operand(a.predicate, a.operand):
                raise ConditionError(f"atom {a.render()!r} does not fit domain of {a.var!r}")


def _decl_map(decls) -> Dict[str, VarDecl]:
    if isinstance(decls, Mapping):
        return dict(decls)
    return {d.name: d for d in decls}


def valuations(decls: Sequence[VarDecl]) -> Iterator[Valuation]:
    names = [d.name for d in decls]
    for combo in itertools.product(*(d.domain() for d in decls)):
        yield dict(zip(names, combo))


def _relevant(decls, conds: Sequence[Condition]) -> List[VarDecl]:
    dmap = _decl_map(decls)
    size = space_size(dmap.values())
    if size > ENUMERATION_CAP:
        raise EnumerationCapExceeded(size)
    names = set()
    for c in conds:
        names |= c.variables()
    missing = sorted(names - set(dmap))
    if missing:
        raise UnboundVariableError(missing[0])
    return [dmap[n] for n in sorted(names)]


def is_satisfiable(cond: Condition, decls) -> bool:
    if cond.is_false:
        _relevant(decls, [])
        return False
    rel = _relevant(decls, [cond])
    return any(evaluate(cond, v) for v in valuations(rel))


def _syntactic_entails(a: Condition, b: Condition) -> bool:
    bsets = [set(c.literals) for c in b.clauses]
    return all(any(bs <= set(ca.literals) for bs in bsets) for ca in a.clauses)


def entails(a: Condition, b: Condition, decls) -> bool:
    """True iff every valuation satisfying ``a`` satisfies ``b``."""
    rel = _relevant(decls, [a, b])
    if _syntactic_entails(a, b):
        return True
    return all(evaluate(b, v) for v in valuations(rel) if evaluate(a, v))


def equivalent(a: Condition, b: Condition, decls) -> bool:
    rel = _relevant(decls, [a, b])
    return all(evaluate(a, v) == evaluate(b, v) for v in valuations(rel))


def conjoin(a: Condition, b: Condition) -> Condition:
    out = []
    for ca in a.clauses:
        for cb in b.clauses:
            out.append(Clause.of(ca.literals + cb.literals))
    return Condition.of(out)


def negate(cond: Condition) -> Condition:
    result = Condition.true()
    for clause in cond.clauses:
        if not clause.literals:
            return Condition.false()
        result = conjoin(result, Condition.of(Clause.of([a.negate()]) for a in clause.literals))
        if result.is_false:
            break
    return result


def conjoin_negation(a: Condition, b: Condition) -> Condition:
    """Normalized DNF of ``a and not b``."""
    return conjoin(a, negate(b))


def disjoin(a: Condition, b: Condition) -> Condition:
    return Condition.of(a.clauses + b.clauses)


def partition_disjuncts(cond: Condition) -> List[Condition]:
    return [Condition((c,)) for c in normalize(cond).clauses]


def disjuncts_overlap(cond: Condition, decls) -> List[Tuple[int, int]]:
    """Index pairs of disjuncts that share a satisfying valuation (reported, never enforced)."""
    parts = partition_disjuncts(cond)
    return [
        (i, j)
        for i, j in itertools.combinations(range(len(parts)), 2)
        if is_satisfiable(conjoin(parts[i], parts[j]), decls)
    ]


def minimal_violation_targets(clause: Clause) -> List[Tuple[Atom, Condition]]:
    if not clause.literals:
        raise ConditionError("the empty clause (True) has no violation targets")
    out = []
    for i, lit in enumerate(clause.literals):
        rest = clause.literals[:i] + clause.literals[i + 1:]
        out.append((lit, Condition.conj((lit.negate(),) + rest)))
    return out


def _constraints(clause: Clause, dmap: Mapping[str, VarDecl]) -> Optional[Dict[Any, frozenset]]:
    """Per-dimension allowed values of a clause; None if some dimension is empty.

    Scalar variables are dimensions over their domain; each (set variable,
    element) pair is a boolean dimension.
    """
    out: Dict[Any, frozenset] = {}
    for a in clause.literals:
        if a.predicate in ("contains", "not_contains"):
            key, allowed = (a.var, a.operand), frozenset([a.predicate == "contains"])
        else:
            dom = dmap[a.var].domain()
            key = a.var
            allowed = frozenset(
                v for v in dom if (v == a.operand and type(v) is type(a.operand)) == (a.predicate == "eq")
            )
        out[key] = out.get(key, allowed) & allowed
        if not out[key]:
            return None
    return out


def _full(key, dmap) -> frozenset:
    return frozenset([False, True]) if isinstance(key, tuple) else frozenset(dmap[key].domain())


def _render_constraints(cons: Mapping[Any, frozenset], dmap) -> Clause:
    lits = []
    for key in sorted(cons, key=repr):
        allowed = cons[key]
        if isinstance(key, tuple):
            var, elem = key
            lits.append(Atom(var, "contains" if True in allowed else "not_contains", elem))
            continue
        dom = dmap[key].domain()
        if len(allowed) == 1:
            lits.append(Atom(key, "eq", next(iter(allowed))))
        else:
            lits.extend(Atom(key, "neq", v) for v in dom if v not in allowed)
    return Clause.of(lits)


def simplify(cond: Condition, decls) -> Condition:
    """Domain-aware normal form, logically equivalent to ``cond``.

    Drops clauses that no valuation satisfies, tightens each variable's
    literals against its domain, and merges clauses that differ in a single
    variable, e.g. ``x == 1 && R || x == 2 && R`` becomes ``R`` when x ranges
    over {1, 2}.
    """
    dmap = _decl_map(decls)
    missing = sorted(cond.variables() - set(dmap))
    if missing:
        raise UnboundVariableError(missing[0])
    items = [c for c in (_constraints(cl, dmap) for cl in cond.clauses) if c is not None]
    items = [{k: v for k, v in c.items() if v != _full(k, dmap)} for c in items]

    def covers(big, small):  # every valuation of `small` satisfies `big`
        return all(k in small and small[k] <= v for k, v in big.items())

    changed = True
    while changed:
        changed = False
        for i, j in itertools.combinations(range(len(items)), 2):
            a, b = items[i], items[j]
            if covers(a, b) or covers(b, a):
                del items[j if covers(a, b) else i]
                changed = True
                break
            keys = set(a) | set(b)
            diff = [k for k in keys if a.get(k, _full(k, dmap)) != b.get(k, _full(k, dmap))]
            if len(diff) == 1:
                k = diff[0]
                merged = dict(a)
                union = a.get(k, _full(k, dmap)) | b.get(k, _full(k, dmap))
                if union == _full(k, dmap):
                    merged.pop(k, None)
                else:
                    merged[k] = union
                items[i] = merged
                del items[j]
                changed = True
                break
    return normalize(Condition.of(_render_constraints(c, dmap) for c in items))


def describe_state(val: Mapping[str, Value], names: Iterable[str], decls) -> Condition:
    """Conjunction of eq/contains atoms reflecting ``val`` on ``names``.

    Scalars become ``eq`` atoms; a non-empty set contributes one ``contains``
    atom per member; an empty set is described as ``not_contains`` over its
    whole universe.
    """
    dmap = _decl_map(decls)
    lits = []
    for name in sorted(names):
        d = dmap[name]
        v = val[name]
        if d.is_set:
            if v:
                lits.extend(Atom(name, "contains", e) for e in sorted(v))
            else:
                lits.extend(Atom(name, "not_contains", e) for e in d.values)
        else:
            lits.append(Atom(name, "eq", v))
    return Condition.conj(lits)


TRUE = Condition.true()
FALSE = Condition.false()
