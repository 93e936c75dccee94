"""End-to-end OCR and exam evaluation against in-process stub models.

Builds a small OCR benchmark from SMILES (the "image" bytes carry the
gold string), runs a perfect, a noisy and a garbage model through the
full pipeline, and prints the resulting Markdown tables. No network.

    python3 scripts/demo_offline_eval.py --out runs/demo --n 50
"""

from __future__ import annotations

import argparse
import base64
import json
import random
from dataclasses import dataclass, replace
from pathlib import Path

from chemeval.clients import ModelEndpoint
from chemeval.runner import RunConfig, run_ocr_eval
from chemeval.smiles import BondOrder, Molecule, default_implicit_h, parse, validate, write
from chemeval.stub import StubServer, constant, echo_image

DEFAULT_SMILES = [
    "CCO", "CC(=O)O", "c1ccccc1", "c1ccncc1", "CC(=O)Nc1ccc(O)cc1", "CN1C=NC2=C1C(=O)N(C(=O)N2C)C",
    "OC(=O)c1ccccc1O", "CC(C)Cc1ccc(cc1)C(C)C(=O)O", "C1CCCCC1", "ClC(Cl)Cl", "CCN(CC)CC",
    "O=C(O)CCC(=O)O", "c1ccc2ccccc2c1", "CC#N", "OCC(O)CO", "c1ccsc1", "c1ccoc1", "CS(=O)(=O)C",
]


@dataclass(frozen=True)
class DemoConfig:
    out: Path = Path("runs/demo")
    n: int = 50
    noise: float = 0.3  # fraction of answers the noisy model perturbs
    seed: int = 0


def _perturb(smiles: str, rng: random.Random) -> str:
    """Change the element of one plain, singly bonded atom to make a near miss."""
    mol = parse(smiles)
    for _ in range(20):
        i = rng.randrange(len(mol))
        atom = mol.atoms[i]
        if atom.aromatic or atom.is_bracket:
            continue
        if any(o is not BondOrder.SINGLE for _, o in mol.adjacency[i]):
            continue
        swap = {"C": "N", "N": "C", "O": "S", "S": "O", "Cl": "Br", "Br": "Cl"}.get(atom.element)
        if swap is None:
            continue
        atoms = list(mol.atoms)
        orders = [o for _, o in mol.adjacency[i]]
        atoms[i] = replace(atom, element=swap, implicit_h=default_implicit_h(swap, orders))
        text = write(Molecule(tuple(atoms), mol.bonds))
        if validate(text):
            return text
    return smiles + "C"


def _benchmark(cfg: DemoConfig) -> Path:
    rng = random.Random(cfg.seed)
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / "ocr_demo.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for k in range(cfg.n):
            gold = rng.choice(DEFAULT_SMILES)
            image = {"type": "base64", "value": base64.b64encode(gold.encode()).decode()}
            fh.write(json.dumps({"id": f"d{k:04d}", "image": image, "gold_smiles": gold}) + "\n")
    return path


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=DemoConfig.out)
    ap.add_argument("--n", type=int, default=DemoConfig.n)
    ap.add_argument("--noise", type=float, default=DemoConfig.noise)
    ap.add_argument("--seed", type=int, default=DemoConfig.seed)
    cfg = DemoConfig(**vars(ap.parse_args()))

    bench = _benchmark(cfg)
    def noisy(body: dict) -> str:
        # seeded by the request itself so worker-thread order does not matter
        rng = random.Random(f"{cfg.seed}:{json.dumps(body, sort_keys=True)}")
        gold = echo_image(body)
        return f"The SMILES is {_perturb(gold, rng) if rng.random() < cfg.noise else gold}."

    models = {"perfect": echo_image, "noisy": noisy, "garbage": constant("I am not sure.")}
    for name, responder in models.items():
        with StubServer(responder) as server:
            run = RunConfig(
                benchmark_path=bench,
                schema="ocr",
                model=ModelEndpoint(server.base_url, f"stub-{name}"),
                output_dir=cfg.out / name,
                seed=cfg.seed,
            )
            print(run_ocr_eval(run).to_markdown())


if __name__ == "__main__":
    main()
