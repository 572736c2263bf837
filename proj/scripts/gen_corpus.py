#!/usr/bin/env python3
"""Generate the bundled SMILES corpus (data/corpus_5k.smi).

Self-contained: builds random valence-respecting CNOF molecules of up to 9
heavy atoms plus substituted aromatic ring systems, and writes them as SMILES
with a small built-in writer. Deterministic for a fixed seed, so the committed
corpus can be regenerated byte-for-byte.
"""

import argparse
import random
import sys

MAX_VALENCE = {"C": 4, "N": 3, "O": 2, "F": 1}

# Tiny classics so the corpus is not all 8-9 atom molecules.
SEED_MOLECULES = [
    "C", "N", "O", "CO", "CC", "CN", "CF", "C=O", "C#C", "C#N",
    "O=C=O", "CCO", "CC=O", "CNC", "CCN", "COC", "OC=O", "NC=O",
    "CC#N", "FCF", "C1CC1", "C1CCC1", "C1CCCC1", "C1CCOC1", "C1CCNC1",
    "c1ccn2ccccc12",
]

# Aromatic ring templates: (ring atom tokens in emission order).
# '[nH]' positions carry the pyrrole hydrogen; substituting there swaps the
# token to plain 'n' with the substituent taking the hydrogen's place.
AROMATIC_TEMPLATES = [
    ["c", "c", "c", "c", "c", "c"],          # benzene
    ["n", "c", "c", "c", "c", "c"],          # pyridine
    ["n", "c", "n", "c", "c", "c"],          # pyrimidine
    ["n", "c", "c", "n", "c", "c"],          # pyrazine
    ["c", "c", "c", "c", "[nH]"],            # pyrrole
    ["c", "c", "c", "c", "o"],               # furan
    ["c", "c", "[nH]", "c", "n"],            # imidazole
    ["c", "c", "c", "[nH]", "n"],            # pyrazole
    ["c", "o", "c", "n", "c"],               # oxazole
]

# Substituent fragments as (smiles, heavy atom count).
FRAGMENTS = [
    ("C", 1), ("N", 1), ("O", 1), ("F", 1),
    ("CC", 2), ("OC", 2), ("CO", 2), ("C=O", 2), ("C#N", 2), ("CF", 2),
    ("CCO", 3), ("OCC", 3), ("N(C)C", 3), ("C(F)F", 3), ("CC#N", 3),
]


def random_graph(rng):
    """Random connected molecule as (atoms, bonds dict {(u,v): order}, u<v)."""
    n = rng.choices(range(1, 10), weights=[1, 2, 4, 6, 9, 13, 18, 22, 25])[0]
    atoms = []
    for _ in range(n):
        atoms.append(rng.choices("CNOF", weights=[70, 12, 13, 5])[0])
    bonds = {}
    used = [0] * n

    def spare(v):
        return MAX_VALENCE[atoms[v]] - used[v]

    for i in range(1, n):
        parents = [j for j in range(i) if spare(j) >= 1]
        if not parents:
            atoms[i] = "C"  # guarantee attachable growth
            parents = [j for j in range(i) if spare(j) >= 1]
            if not parents:
                return atoms[:i], bonds
        p = rng.choice(parents)
        cap = min(spare(p), MAX_VALENCE[atoms[i]])
        orders = [o for o in (1, 2, 3) if o <= cap]
        weights = [74, 20, 6][: len(orders)]
        o = rng.choices(orders, weights=weights)[0]
        bonds[(p, i)] = o
        used[p] += o
        used[i] += o

    # Occasional ring-forming extra edges.
    for _ in range(rng.choices([0, 1, 2], weights=[55, 35, 10])[0]):
        pairs = [
            (u, v)
            for u in range(n)
            for v in range(u + 1, n)
            if (u, v) not in bonds and spare(u) >= 1 and spare(v) >= 1
        ]
        # Skip 2-atom "rings" (parallel edges are impossible anyway) and
        # strained 3-cycles through a shared neighbour half the time.
        pairs = [p for p in pairs if p[1] - p[0] >= 2]
        if not pairs:
            break
        u, v = rng.choice(pairs)
        bonds[(u, v)] = 1
        used[u] += 1
        used[v] += 1
    return atoms, bonds


def write_smiles(atoms, bonds):
    """DFS writer: tree edges inline, back edges as ring-closure digits."""
    n = len(atoms)
    adj = {v: [] for v in range(n)}
    for (u, v), o in bonds.items():
        adj[u].append((v, o))
        adj[v].append((u, o))
    for v in adj:
        adj[v].sort()

    visited = [False] * n
    tree = {v: [] for v in range(n)}  # v -> [(child, order)]
    rings = []  # (opener, closer, order): opener emitted first in the DFS
    ring_edges = set()

    def dfs(u, parent):
        visited[u] = True
        for v, o in adj[u]:
            if not visited[v]:
                tree[u].append((v, o))
                dfs(v, u)
            elif v != parent and (min(u, v), max(u, v)) not in ring_edges:
                ring_edges.add((min(u, v), max(u, v)))
                rings.append((v, u, o))

    dfs(0, -1)

    bond_char = {1: "", 2: "=", 3: "#"}
    ring_digit = {}
    free = list(range(1, 10))

    def ring_tokens(v):
        out = []
        for idx, (a, b, o) in enumerate(rings):
            if v == a:
                d = free.pop(0)
                ring_digit[idx] = d
                out.append(bond_char[o] + str(d))
            elif v == b:
                d = ring_digit[idx]
                free.insert(0, d)
                free.sort()
                out.append(bond_char[o] + str(d))
        return "".join(out)

    def emit(v):
        s = atoms[v] + ring_tokens(v)
        kids = tree[v]
        for i, (c, o) in enumerate(kids):
            part = bond_char[o] + emit(c)
            s += part if i == len(kids) - 1 else "(" + part + ")"
        return s

    return emit(0)


def aromatic_molecule(rng):
    ring = list(rng.choice(AROMATIC_TEMPLATES))
    budget = 9 - len(ring)
    positions = list(range(len(ring)))
    rng.shuffle(positions)
    subs = [None] * len(ring)
    for pos in positions[: rng.choices([0, 1, 2, 3], weights=[30, 40, 22, 8])[0]]:
        if budget <= 0:
            break
        if ring[pos] in ("n", "o"):
            continue  # a lone pair position; no free valence slot
        frags = [(f, c) for f, c in FRAGMENTS if c <= budget]
        if not frags:
            break
        frag, cost = rng.choice(frags)
        if ring[pos] == "[nH]":
            ring[pos] = "n"
        subs[pos] = frag
        budget -= cost
    out = ring[0] + "1" + (f"({subs[0]})" if subs[0] else "")
    for i in range(1, len(ring)):
        out += ring[i] + (f"({subs[i]})" if subs[i] else "")
    return out + "1"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=20260825)
    ap.add_argument("--out", default="data/corpus_5k.smi")
    ap.add_argument("--aromatic-frac", type=float, default=0.35)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    seen = set()
    lines = []
    for s in SEED_MOLECULES:
        if s not in seen:
            seen.add(s)
            lines.append(s)
    n_aromatic = 0
    attempts = 0
    while len(lines) < args.n:
        attempts += 1
        if attempts > args.n * 200:
            raise SystemExit("generator stalled; not enough distinct molecules")
        if rng.random() < args.aromatic_frac:
            s = aromatic_molecule(rng)
            fresh = s not in seen
            n_aromatic += fresh
        else:
            atoms, bonds = random_graph(rng)
            s = write_smiles(atoms, bonds)
            fresh = s not in seen
        if fresh:
            seen.add(s)
            lines.append(s)

    with open(args.out, "w") as f:
        f.write("\n".join(lines) + "\n")
    print(
        f"wrote {len(lines)} molecules to {args.out} "
        f"({n_aromatic} aromatic, seed {args.seed})",
        file=sys.stderr,
    )


if __name__ == "__main__":
    main()
