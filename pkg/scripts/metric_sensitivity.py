"""How far do the OCR metrics move under small structural mistakes?

Applies k random edits (element swap, extra methyl, leaf deletion) to each
input molecule and reports mean similarity and tani@1.0 per edit count,
for several fingerprint radii. Read one SMILES per line.

    python3 scripts/metric_sensitivity.py tests/data/corpus.smi --edits 3 --json out.json
"""

from __future__ import annotations

import argparse
import json
import random
import statistics
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from chemeval.fingerprint import FingerprintParams
from chemeval.metrics import score_ocr
from chemeval.smiles import (
    Atom,
    Bond,
    BondOrder,
    InvalidSmiles,
    Molecule,
    default_implicit_h,
    parse,
    write,
)

SWAPS = {"C": "N", "N": "O", "O": "S", "S": "O", "F": "Cl", "Cl": "Br", "Br": "Cl"}


@dataclass(frozen=True)
class SensitivityConfig:
    smiles_file: Path
    edits: int = 3
    radii: tuple[int, ...] = (1, 2, 3)
    width: int = 2048
    seed: int = 0
    json_out: Path | None = None


@dataclass
class Row:
    radius: int
    n_edits: int
    n: int
    avg_similarity_pct: float
    tanimoto_at_1_pct: float
    similarity_sd: float = field(default=0.0)


def _rehydrogenate(mol: Molecule, atoms: list[Atom]) -> list[Atom]:
    out = []
    for i, a in enumerate(atoms):
        if a.is_bracket or a.element == "*":
            out.append(a)
        else:
            orders = [o for _, o in mol.adjacency[i]]
            out.append(replace(a, implicit_h=default_implicit_h(a.element, orders)))
    return out


def _swap(mol: Molecule, rng: random.Random) -> Molecule | None:
    plain = [i for i, a in enumerate(mol.atoms) if not a.aromatic and not a.is_bracket and a.element in SWAPS]
    if not plain:
        return None
    i = rng.choice(plain)
    atoms = list(mol.atoms)
    atoms[i] = replace(atoms[i], element=SWAPS[atoms[i].element])
    return Molecule(tuple(_rehydrogenate(mol, atoms)), mol.bonds)


def _add_methyl(mol: Molecule, rng: random.Random) -> Molecule | None:
    hosts = [i for i, a in enumerate(mol.atoms) if a.implicit_h > 0]
    if not hosts:
        return None
    i = rng.choice(hosts)
    n = len(mol)
    atoms = list(mol.atoms) + [Atom("C", index=n)]
    grown = Molecule(tuple(atoms), mol.bonds + (Bond(i, n, BondOrder.SINGLE),))
    return Molecule(tuple(_rehydrogenate(grown, atoms)), grown.bonds)


def _delete_leaf(mol: Molecule, rng: random.Random) -> Molecule | None:
    leaves = [i for i in range(len(mol)) if mol.degree(i) == 1 and not mol.atoms[i].aromatic]
    if len(mol) < 3 or not leaves:
        return None
    drop = rng.choice(leaves)
    keep = [i for i in range(len(mol)) if i != drop]
    new_index = {old: k for k, old in enumerate(keep)}
    atoms = [replace(mol.atoms[i], index=new_index[i]) for i in keep]
    bonds = tuple(
        Bond(new_index[b.a], new_index[b.b], b.order)
        for b in mol.bonds
        if drop not in (b.a, b.b)
    )
    shrunk = Molecule(tuple(atoms), bonds)
    return Molecule(tuple(_rehydrogenate(shrunk, atoms)), bonds)


EDITS = (_swap, _add_methyl, _delete_leaf)


def mutate(smiles: str, k: int, rng: random.Random) -> str | None:
    mol = parse(smiles)
    done = 0
    for _ in range(10 * k):
        if done == k:
            break
        edited = rng.choice(EDITS)(mol, rng)
        if edited is None:
            continue
        try:
            mol = parse(write(edited))
        except InvalidSmiles:
            continue
        done += 1
    return write(mol) if done == k else None


def run(cfg: SensitivityConfig) -> list[Row]:
    golds = [ln.split()[0] for ln in cfg.smiles_file.read_text().splitlines() if ln.strip()]
    rng = random.Random(cfg.seed)
    pairs_by_k: dict[int, list[tuple[str, str]]] = {}
    for k in range(cfg.edits + 1):
        pairs = []
        for gold in golds:
            pred = gold if k == 0 else mutate(gold, k, rng)
            if pred is not None:
                pairs.append((pred, gold))
        pairs_by_k[k] = pairs
    rows = []
    for radius in cfg.radii:
        params = FingerprintParams(radius, cfg.width)
        for k, pairs in pairs_by_k.items():
            avg, tani, verdicts = score_ocr(pairs, params)
            sd = statistics.pstdev(v.similarity for v in verdicts) * 100.0
            rows.append(Row(radius, k, len(pairs), avg, tani, sd))
    return rows


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("smiles_file", type=Path)
    ap.add_argument("--edits", type=int, default=3)
    ap.add_argument("--radii", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--width", type=int, default=2048)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", dest="json_out", type=Path)
    args = ap.parse_args()
    cfg = SensitivityConfig(
        args.smiles_file, args.edits, tuple(args.radii), args.width, args.seed, args.json_out
    )

    rows = run(cfg)
    print("| radius | edits | N | Avg Sim. (%) | sd | Tani@1.0 (%) |")
    print("|---|---|---|---|---|---|")
    for r in rows:
        print(
            f"| {r.radius} | {r.n_edits} | {r.n} | {r.avg_similarity_pct:.1f} | "
            f"{r.similarity_sd:.1f} | {r.tanimoto_at_1_pct:.1f} |"
        )
    if cfg.json_out:
        cfg.json_out.write_text(json.dumps([asdict(r) for r in rows], indent=2) + "\n")


if __name__ == "__main__":
    main()
