"""
SMILES parsing, writing and canonicalization.

The dialect covers the organic subset, bracket atoms, ring closures
(digits and ``%nn``), branches, dot-separated components and the bond
symbols ``- = # :``. Stereo markers (``@``, ``/``, ``\\``) are accepted and
dropped. There is no aromaticity perception and no kekulization: lowercase
atoms are taken as aromatic, everything else as written.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property, lru_cache
from typing import Callable, Iterable, Sequence

__all__ = [
    "Atom",
    "Bond",
    "BondOrder",
    "CanonicalRanks",
    "InvalidSmiles",
    "Molecule",
    "SmilesVerdict",
    "canonical_ranks",
    "canonicalize",
    "parse",
    "permute",
    "validate",
    "write",
]


# fmt: off
ELEMENTS: tuple[str, ...] = (
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S",
    "Cl", "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga",
    "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd",
    "Ag", "Cd", "In", "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm",
    "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os",
    "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa",
    "U", "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg",
    "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og",
)
# fmt: on

WILDCARD = "*"
ATOMIC_NUMBER: dict[str, int] = {sym: z for z, sym in enumerate(ELEMENTS, start=1)}
ATOMIC_NUMBER[WILDCARD] = 0

ORGANIC_SUBSET = frozenset({"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"})
AROMATIC_CAPABLE = frozenset({"B", "C", "N", "O", "P", "S", "Se", "As"})
# lowercase forms allowed outside brackets
AROMATIC_BARE = frozenset({"B", "C", "N", "O", "P", "S"})

DEFAULT_VALENCE: dict[str, int] = {
    "B": 3, "C": 4, "N": 3, "O": 2, "P": 3, "S": 2, "F": 1, "Cl": 1, "Br": 1, "I": 1,
}

# Highest bond-order sum accepted for a neutral atom. Elements missing here
# (metals, noble gases, ...) are not valence-checked.
MAX_VALENCE: dict[str, int] = {
    "H": 1, "B": 3, "C": 4, "Si": 4, "N": 3, "P": 5, "As": 5, "O": 2, "S": 6, "Se": 6,
    "F": 1, "Cl": 1, "Br": 1, "I": 5,
}
_GROUP_14 = frozenset({"C", "Si"})


class BondOrder(IntEnum):
    SINGLE = 1
    DOUBLE = 2
    TRIPLE = 3
    AROMATIC = 4

    @property
    def valence(self) -> float:
        return 1.5 if self is BondOrder.AROMATIC else float(self.value)

    @property
    def symbol(self) -> str:
        return _BOND_CHARS[self]


_BOND_CHARS = {
    BondOrder.SINGLE: "-",
    BondOrder.DOUBLE: "=",
    BondOrder.TRIPLE: "#",
    BondOrder.AROMATIC: ":",
}
_BOND_FROM_CHAR = {ch: order for order, ch in _BOND_CHARS.items()}


class InvalidSmiles(ValueError):
    """Raised when a SMILES string cannot be turned into a molecular graph."""

    def __init__(self, reason: str, position: int, smiles: str = ""):
        self.reason = reason
        self.position = position
        self.smiles = smiles
        super().__init__(f"{reason} at position {position}")


@dataclass(frozen=True)
class Atom:
    element: str
    aromatic: bool = False
    formal_charge: int = 0
    isotope: int | None = None
    explicit_h: int | None = None
    implicit_h: int = 0
    index: int = 0

    @property
    def is_bracket(self) -> bool:
        return self.explicit_h is not None

    @property
    def total_h(self) -> int:
        return (self.explicit_h or 0) + self.implicit_h

    @property
    def atomic_number(self) -> int:
        return ATOMIC_NUMBER[self.element]


@dataclass(frozen=True)
class Bond:
    a: int
    b: int
    order: BondOrder = BondOrder.SINGLE

    def other(self, i: int) -> int:
        return self.b if i == self.a else self.a


@dataclass(frozen=True)
class Molecule:
    atoms: tuple[Atom, ...] = ()
    bonds: tuple[Bond, ...] = ()
    components: int = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "atoms", tuple(self.atoms))
        object.__setattr__(self, "bonds", tuple(self.bonds))
        n = len(self.atoms)
        seen: set[frozenset[int]] = set()
        for bond in self.bonds:
            if not (0 <= bond.a < n and 0 <= bond.b < n):
                raise ValueError(f"bond {bond} references a missing atom")
            if bond.a == bond.b:
                raise ValueError(f"bond {bond} joins an atom to itself")
            key = frozenset((bond.a, bond.b))
            if key in seen:
                raise ValueError(f"duplicate bond between atoms {bond.a} and {bond.b}")
            seen.add(key)
        object.__setattr__(self, "components", len(self.fragments))

    def __len__(self) -> int:
        return len(self.atoms)

    @cached_property
    def adjacency(self) -> tuple[tuple[tuple[int, BondOrder], ...], ...]:
        """Per atom, the ``(neighbor, order)`` pairs in bond-list order."""
        adj: list[list[tuple[int, BondOrder]]] = [[] for _ in self.atoms]
        for bond in self.bonds:
            adj[bond.a].append((bond.b, bond.order))
            adj[bond.b].append((bond.a, bond.order))
        return tuple(tuple(x) for x in adj)

    @cached_property
    def fragments(self) -> tuple[tuple[int, ...], ...]:
        """Connected components as sorted atom-index tuples, ordered by lowest index."""
        parent = list(range(len(self.atoms)))

        def find(i: int) -> int:
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for bond in self.bonds:
            ra, rb = find(bond.a), find(bond.b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        groups: dict[int, list[int]] = {}
        for i in range(len(self.atoms)):
            groups.setdefault(find(i), []).append(i)
        return tuple(tuple(g) for _, g in sorted(groups.items()))

    def degree(self, i: int) -> int:
        return len(self.adjacency[i])

    def bond_order(self, i: int, j: int) -> BondOrder | None:
        for k, order in self.adjacency[i]:
            if k == j:
                return order
        return None

    def submolecule(self, indices: Sequence[int]) -> "Molecule":
        """The induced subgraph on ``indices``, renumbered in the given order."""
        remap = {old: new for new, old in enumerate(indices)}
        atoms = [
            Atom(
                element=self.atoms[old].element,
                aromatic=self.atoms[old].aromatic,
                formal_charge=self.atoms[old].formal_charge,
                isotope=self.atoms[old].isotope,
                explicit_h=self.atoms[old].explicit_h,
                implicit_h=self.atoms[old].implicit_h,
                index=new,
            )
            for new, old in enumerate(indices)
        ]
        bonds = [
            Bond(remap[b.a], remap[b.b], b.order)
            for b in self.bonds
            if b.a in remap and b.b in remap
        ]
        return Molecule(tuple(atoms), tuple(bonds))


def permute(mol: Molecule, order: Sequence[int]) -> Molecule:
    """Renumber atoms so that new atom ``k`` is old atom ``order[k]``."""
    if sorted(order) != list(range(len(mol))):
        raise ValueError("order must be a permutation of the atom indices")
    return mol.submolecule(order)


# ---------------------------------------------------------------------------
# valence rules
# ---------------------------------------------------------------------------


def _bond_sums(orders: Iterable[BondOrder]) -> tuple[float, int]:
    """Return (sum with aromatic=1.5, sum with aromatic=1)."""
    full = 0.0
    floor = 0
    for order in orders:
        full += order.valence
        floor += 1 if order is BondOrder.AROMATIC else int(order)
    return full, floor


def default_implicit_h(element: str, orders: Iterable[BondOrder]) -> int:
    """Hydrogens a bare organic-subset atom gets for the given bonds."""
    if element not in DEFAULT_VALENCE:
        return 0
    full, _ = _bond_sums(orders)
    return max(0, DEFAULT_VALENCE[element] - math.ceil(full))


def max_valence(element: str, charge: int) -> int | None:
    base = MAX_VALENCE.get(element)
    if base is None:
        return None
    if element == "H" or element in _GROUP_14:
        limit = base - abs(charge)
    elif element == "B":
        limit = base - charge
    else:
        # pnictogens, chalcogens, halogens: a cation gains a bond, an anion loses one
        limit = base + charge
    return max(0, limit)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


@dataclass
class _AtomSpec:
    element: str
    aromatic: bool
    charge: int = 0
    isotope: int | None = None
    hcount: int | None = None
    position: int = 0


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.atoms: list[_AtomSpec] = []
        self.bonds: dict[frozenset[int], BondOrder] = {}
        self.bond_list: list[tuple[int, int]] = []

    def fail(self, reason: str, position: int | None = None) -> InvalidSmiles:
        return InvalidSmiles(reason, self.pos if position is None else position, self.text)

    def run(self) -> Molecule:
        text = self.text
        if not text:
            raise self.fail("empty input", 0)
        prev: int | None = None
        branches: list[tuple[int, int]] = []  # (atom, position of "(")
        pending: str | None = None
        pending_pos = 0
        rings: dict[int, tuple[int, str | None, int]] = {}
        last_token = ""

        while self.pos < len(text):
            ch = text[self.pos]
            start = self.pos
            if ch == "(":
                if prev is None:
                    raise self.fail("branch without a preceding atom")
                if pending is not None:
                    raise self.fail("bond symbol before branch")
                branches.append((prev, start))
                self.pos += 1
                last_token = "("
            elif ch == ")":
                if not branches:
                    raise self.fail("unmatched parenthesis")
                if pending is not None:
                    raise self.fail("dangling bond symbol", pending_pos)
                if last_token == "(":
                    raise self.fail("empty branch")
                prev, _ = branches.pop()
                self.pos += 1
                last_token = ")"
            elif ch in "-=#:/\\":
                if pending is not None:
                    raise self.fail("consecutive bond symbols")
                if prev is None:
                    raise self.fail("bond symbol without a preceding atom")
                pending, pending_pos = ch, start
                self.pos += 1
                last_token = "bond"
            elif ch.isdigit() or ch == "%":
                if prev is None:
                    raise self.fail("ring closure without a preceding atom")
                if ch == "%":
                    digits = text[self.pos + 1 : self.pos + 3]
                    if len(digits) != 2 or not digits.isdigit():
                        raise self.fail("malformed %nn ring closure")
                    label = int(digits)
                    self.pos += 3
                else:
                    label = int(ch)
                    self.pos += 1
                if label in rings:
                    other, other_bond, _ = rings.pop(label)
                    order = self._ring_order(other, other_bond, prev, pending, start)
                    self._add_bond(other, prev, order, start)
                else:
                    rings[label] = (prev, pending, start)
                pending = None
                last_token = "ring"
            elif ch == ".":
                if prev is None:
                    raise self.fail("dot without a preceding atom")
                if pending is not None:
                    raise self.fail("dangling bond symbol", pending_pos)
                prev = None
                self.pos += 1
                last_token = "."
            else:
                idx = self._read_atom()
                if prev is not None:
                    order = self._chain_order(prev, idx, pending, start)
                    self._add_bond(prev, idx, order, start)
                pending = None
                prev = idx
                last_token = "atom"

        if pending is not None:
            raise self.fail("dangling bond symbol", pending_pos)
        if branches:
            raise self.fail("unmatched parenthesis", branches[-1][1])
        if rings:
            raise self.fail("unmatched ring closure", min(p for _, _, p in rings.values()))
        if prev is None and last_token == ".":
            raise self.fail("trailing dot", len(text) - 1)
        return self._build()

    # bond handling -------------------------------------------------------

    def _chain_order(self, a: int, b: int, sym: str | None, position: int) -> BondOrder:
        if sym is not None and sym in _BOND_FROM_CHAR:
            order = _BOND_FROM_CHAR[sym]
        elif self.atoms[a].aromatic and self.atoms[b].aromatic:
            order = BondOrder.AROMATIC
        else:
            order = BondOrder.SINGLE
        if order is BondOrder.AROMATIC and not (self.atoms[a].aromatic and self.atoms[b].aromatic):
            raise self.fail("aromatic bond between non-aromatic atoms", position)
        return order

    def _ring_order(
        self, a: int, sym_a: str | None, b: int, sym_b: str | None, position: int
    ) -> BondOrder:
        explicit = {s for s in (sym_a, sym_b) if s is not None and s in _BOND_FROM_CHAR}
        if len(explicit) > 1:
            raise self.fail("conflicting ring-closure bond symbols", position)
        return self._chain_order(a, b, explicit.pop() if explicit else None, position)

    def _add_bond(self, a: int, b: int, order: BondOrder, position: int) -> None:
        if a == b:
            raise self.fail("ring closure onto the same atom", position)
        key = frozenset((a, b))
        if key in self.bonds:
            raise self.fail("duplicate bond", position)
        self.bonds[key] = order
        self.bond_list.append((a, b))

    # atoms ---------------------------------------------------------------

    def _read_atom(self) -> int:
        text, start = self.text, self.pos
        ch = text[start]
        if ch == "[":
            spec = self._read_bracket()
        elif ch == WILDCARD:
            spec = _AtomSpec(WILDCARD, False, position=start)
            self.pos += 1
        elif text.startswith(("Cl", "Br"), start):
            spec = _AtomSpec(text[start : start + 2], False, position=start)
            self.pos += 2
        elif ch in ORGANIC_SUBSET:
            spec = _AtomSpec(ch, False, position=start)
            self.pos += 1
        elif ch.upper() in AROMATIC_BARE and ch.islower():
            spec = _AtomSpec(ch.upper(), True, position=start)
            self.pos += 1
        elif ch.isalpha():
            raise self.fail("unknown element")
        else:
            raise self.fail(f"unexpected character {ch!r}")
        self.atoms.append(spec)
        return len(self.atoms) - 1

    def _read_bracket(self) -> _AtomSpec:
        text, start = self.text, self.pos
        end = text.find("]", start)
        if end < 0:
            raise self.fail("malformed bracket atom: missing ']'")
        body = text[start + 1 : end]
        i = 0

        def bad(why: str) -> InvalidSmiles:
            return self.fail(f"malformed bracket atom: {why}", start + 1 + i)

        j = i
        while j < len(body) and body[j].isdigit():
            j += 1
        isotope = int(body[i:j]) if j > i else None
        i = j
        if i >= len(body):
            raise bad("missing element")

        aromatic = False
        element = None
        if body[i] == WILDCARD:
            element = WILDCARD
            i += 1
        elif body[i].isupper():
            two = body[i : i + 2]
            if len(two) == 2 and two[1].islower() and two in ATOMIC_NUMBER:
                element = two
                i += 2
            elif body[i] in ATOMIC_NUMBER:
                element = body[i]
                i += 1
        elif body[i].islower():
            two = body[i : i + 2]
            if two in ("se", "as"):
                element = two.capitalize()
                i += 2
            elif body[i].upper() in AROMATIC_BARE:
                element = body[i].upper()
                i += 1
            aromatic = element is not None
        if element is None:
            raise self.fail("unknown element", start + 1 + i)

        # chirality: @, @@, @TH1, @AL2, @SP3, @TB12, @OH30
        if i < len(body) and body[i] == "@":
            i += 1
            if i < len(body) and body[i] == "@":
                i += 1
            elif body[i : i + 2] in ("TH", "AL", "SP", "TB", "OH"):
                i += 2
                j = i
                while j < len(body) and body[j].isdigit():
                    j += 1
                if j == i:
                    raise bad("chirality class without a number")
                i = j

        hcount = 0
        if i < len(body) and body[i] == "H":
            i += 1
            j = i
            while j < len(body) and body[j].isdigit():
                j += 1
            hcount = int(body[i:j]) if j > i else 1
            i = j

        charge = 0
        if i < len(body) and body[i] in "+-":
            sign = 1 if body[i] == "+" else -1
            sym = body[i]
            i += 1
            j = i
            while j < len(body) and body[j].isdigit():
                j += 1
            if j > i:
                charge = sign * int(body[i:j])
                i = j
            else:
                n = 1
                while i < len(body) and body[i] == sym:
                    n += 1
                    i += 1
                charge = sign * n

        if i < len(body) and body[i] == ":":
            j = i + 1
            while j < len(body) and body[j].isdigit():
                j += 1
            if j == i + 1:
                raise bad("atom class without a number")
            i = j

        if i != len(body):
            raise bad(f"unexpected {body[i]!r}")
        self.pos = end + 1
        return _AtomSpec(element, aromatic, charge, isotope, hcount, position=start)

    # assembly ------------------------------------------------------------

    def _build(self) -> Molecule:
        orders_of: list[list[BondOrder]] = [[] for _ in self.atoms]
        for a, b in self.bond_list:
            order = self.bonds[frozenset((a, b))]
            orders_of[a].append(order)
            orders_of[b].append(order)

        atoms = []
        for idx, spec in enumerate(self.atoms):
            orders = orders_of[idx]
            _, floor_sum = _bond_sums(orders)
            if spec.element != WILDCARD:
                limit = max_valence(spec.element, spec.charge)
                used = floor_sum + (spec.hcount or 0)
                if limit is not None and used > limit:
                    raise self.fail(
                        f"valence {used} exceeds maximum {limit} for {spec.element}",
                        spec.position,
                    )
            if spec.hcount is None and spec.element != WILDCARD:
                implicit = default_implicit_h(spec.element, orders)
            else:
                implicit = 0
            atoms.append(
                Atom(
                    element=spec.element,
                    aromatic=spec.aromatic,
                    formal_charge=spec.charge,
                    isotope=spec.isotope,
                    explicit_h=spec.hcount,
                    implicit_h=implicit,
                    index=idx,
                )
            )
        bonds = tuple(Bond(a, b, self.bonds[frozenset((a, b))]) for a, b in self.bond_list)
        return Molecule(tuple(atoms), bonds)


def parse(smiles: str) -> Molecule:
    """Parse ``smiles`` into a :class:`Molecule`.

    Raises :class:`InvalidSmiles` carrying the failing position and a reason.
    """
    if not isinstance(smiles, str):
        raise TypeError(f"expected str, got {type(smiles).__name__}")
    return _Parser(smiles).run()


@dataclass(frozen=True)
class SmilesVerdict:
    ok: bool
    reason: str | None = None
    position: int | None = None

    def __bool__(self) -> bool:
        return self.ok


def validate(smiles: str) -> SmilesVerdict:
    try:
        parse(smiles)
    except InvalidSmiles as exc:
        return SmilesVerdict(False, exc.reason, exc.position)
    except TypeError as exc:
        return SmilesVerdict(False, str(exc), None)
    return SmilesVerdict(True)


# ---------------------------------------------------------------------------
# writer
# ---------------------------------------------------------------------------


def _charge_token(charge: int) -> str:
    if charge == 0:
        return ""
    sign = "+" if charge > 0 else "-"
    return sign if abs(charge) == 1 else f"{sign}{abs(charge)}"


def _atom_token(mol: Molecule, i: int) -> str:
    atom = mol.atoms[i]
    orders = [o for _, o in mol.adjacency[i]]
    plain = atom.formal_charge == 0 and atom.isotope is None
    if atom.element == WILDCARD:
        if plain and atom.total_h == 0:
            return WILDCARD
    elif plain and atom.element in ORGANIC_SUBSET and (
        not atom.aromatic or atom.element in AROMATIC_BARE
    ):
        if atom.total_h == default_implicit_h(atom.element, orders):
            return atom.element.lower() if atom.aromatic else atom.element
    symbol = atom.element.lower() if atom.aromatic else atom.element
    isotope = "" if atom.isotope is None else str(atom.isotope)
    h = atom.total_h
    hpart = "" if h == 0 else ("H" if h == 1 else f"H{h}")
    return f"[{isotope}{symbol}{hpart}{_charge_token(atom.formal_charge)}]"


def _bond_token(mol: Molecule, a: int, b: int, order: BondOrder) -> str:
    if order is BondOrder.SINGLE:
        return "-" if mol.atoms[a].aromatic and mol.atoms[b].aromatic else ""
    if order is BondOrder.AROMATIC:
        return ""
    return order.symbol


def _ring_label(n: int) -> str:
    if n < 10:
        return str(n)
    if n < 100:
        return f"%{n}"
    raise ValueError("more than 99 simultaneously open rings")


def _write_component(mol: Molecule, root: int, key: Callable[[int], object]) -> str:
    adj = mol.adjacency
    # pass 1: DFS spanning tree and ring-closure (back) edges
    order = [root]
    seen = {root}
    children: dict[int, list[int]] = {root: []}
    used: set[frozenset[int]] = set()
    closures: list[tuple[int, int]] = []  # (opener, closer)
    stack = [(root, iter(sorted((n for n, _ in adj[root]), key=key)))]
    while stack:
        a, it = stack[-1]
        for b in it:
            edge = frozenset((a, b))
            if edge in used:
                continue
            used.add(edge)
            if b in seen:
                closures.append((b, a))
            else:
                seen.add(b)
                order.append(b)
                children[a].append(b)
                children[b] = []
                stack.append((b, iter(sorted((n for n, _ in adj[b]), key=key))))
                break
        else:
            stack.pop()

    pre = {a: k for k, a in enumerate(order)}
    opens: dict[int, list[int]] = {}
    closes: dict[int, list[int]] = {}
    for opener, closer in closures:
        opens.setdefault(opener, []).append(closer)
        closes.setdefault(closer, []).append(opener)

    # pass 2: emit in preorder
    out: list[str] = []
    free: list[int] = []
    next_label = 1
    label_of: dict[frozenset[int], int] = {}
    work: list[object] = [root]
    while work:
        item = work.pop()
        if isinstance(item, str):
            out.append(item)
            continue
        a = item
        out.append(_atom_token(mol, a))
        released = []
        for opener in sorted(closes.get(a, ()), key=pre.__getitem__):
            label = label_of.pop(frozenset((opener, a)))
            out.append(_ring_label(label))
            released.append(label)
        for closer in sorted(opens.get(a, ()), key=pre.__getitem__):
            if free:
                free.sort()
                label = free.pop(0)
            else:
                label = next_label
                next_label += 1
            label_of[frozenset((a, closer))] = label
            out.append(_bond_token(mol, a, closer, mol.bond_order(a, closer)))
            out.append(_ring_label(label))
        free.extend(released)

        kids = children[a]
        items: list[object] = []
        for k, c in enumerate(kids):
            bond = _bond_token(mol, a, c, mol.bond_order(a, c))
            if k < len(kids) - 1:
                items.extend(["(", bond, c, ")"])
            else:
                items.extend([bond, c])
        work.extend(reversed(items))
    return "".join(out)


def write(mol: Molecule) -> str:
    """Serialize ``mol``; each component is a DFS from its lowest-index atom."""
    return ".".join(
        _write_component(mol, frag[0], lambda i: i) for frag in mol.fragments
    )


# ---------------------------------------------------------------------------
# canonical ranking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CanonicalRanks:
    """Canonical atom labels.

    ``ranks`` is a permutation of ``0..n-1``; ``classes`` holds the labels
    after refinement but before any tie was broken, so atoms sharing a class
    are candidates for the same symmetry orbit.
    """

    ranks: tuple[int, ...]
    classes: tuple[int, ...]


def _dense_rank(keys: Sequence) -> list[int]:
    lookup = {k: r for r, k in enumerate(sorted(set(keys)))}
    return [lookup[k] for k in keys]


def _refine(ranks: list[int], adj) -> list[int]:
    n_classes = len(set(ranks))
    while True:
        keys = [
            (ranks[i], tuple(sorted((ranks[j], int(o)) for j, o in adj[i])))
            for i in range(len(ranks))
        ]
        new = _dense_rank(keys)
        n_new = len(set(new))
        if n_new == n_classes:
            return new
        ranks, n_classes = new, n_new


def atom_invariant(mol: Molecule, i: int) -> tuple[int, ...]:
    atom = mol.atoms[i]
    return (
        atom.atomic_number,
        int(atom.aromatic),
        atom.formal_charge,
        -1 if atom.isotope is None else atom.isotope,
        mol.degree(i),
        atom.total_h,
    )


def canonical_ranks(mol: Molecule) -> CanonicalRanks:
    n = len(mol)
    adj = mol.adjacency
    ranks = _refine(_dense_rank([atom_invariant(mol, i) for i in range(n)]), adj)
    classes = tuple(ranks)
    while len(set(ranks)) < n:
        ranks = [2 * r for r in ranks]
        counts = Counter(ranks)
        tied = min(r for r, c in counts.items() if c > 1)
        ranks[ranks.index(tied)] -= 1
        ranks = _refine(ranks, adj)
    return CanonicalRanks(tuple(ranks), classes)


def canonical_write(mol: Molecule) -> str:
    parts = []
    for frag in mol.fragments:
        sub = mol.submolecule(frag)
        ranks = canonical_ranks(sub).ranks
        root = ranks.index(0)
        parts.append(_write_component(sub, root, ranks.__getitem__))
    return ".".join(sorted(parts))


@lru_cache(maxsize=4096)
def canonicalize(smiles: str) -> str:
    """Canonical SMILES: identical output for any atom numbering of the same graph."""
    return canonical_write(parse(smiles))
