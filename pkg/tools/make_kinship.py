"""Regenerate the bundled kinship corpus (src/ruleforge/data/kinship.facts).

Deterministic two-generation family forest: 400 root couples with 3 children
each, 51 second-generation couples with 2 children each, for 2102 persons in
total.  Twelve relations: father, mother, husband, wife, son, daughter,
brother, sister, uncle, aunt, nephew, niece.  Uncle/aunt mean a parent's
sibling (no by-marriage links), so brother+parent rules cover them exactly.

Usage: python3 tools/make_kinship.py
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

N_ROOT_COUPLES = 400
KIDS_PER_ROOT = 3
N_GEN1_COUPLES = 51
KIDS_PER_GEN1 = 2
SEED = 20240601


def main() -> None:
    rng = np.random.default_rng(SEED)
    facts: list[str] = []
    males: set[str] = set()

    def fact(pred: str, *args: str) -> None:
        facts.append(f"{pred}({','.join(args)}).")

    person_count = 0

    def new_person(male: bool) -> str:
        nonlocal person_count
        person_count += 1
        name = f"p{person_count:04d}"
        if male:
            males.add(name)
        return name

    def emit_family(dad: str, mom: str, kids: list[str]) -> None:
        fact("husband", dad, mom)
        fact("wife", mom, dad)
        for kid in kids:
            fact("father", dad, kid)
            fact("mother", mom, kid)
            rel = "son" if kid in males else "daughter"
            fact(rel, kid, dad)
            fact(rel, kid, mom)
        for a in kids:
            for z in kids:
                if a != z:
                    fact("brother" if a in males else "sister", a, z)

    root_children: list[list[str]] = []
    for _ in range(N_ROOT_COUPLES):
        dad, mom = new_person(True), new_person(False)
        kids = [new_person(bool(rng.integers(2))) for _ in range(KIDS_PER_ROOT)]
        emit_family(dad, mom, kids)
        root_children.append(kids)

    # marry gen-1 individuals across different root families
    free_males = [k for kids in root_children for k in kids if k in males]
    free_females = [k for kids in root_children for k in kids if k not in males]
    rng.shuffle(free_males)
    rng.shuffle(free_females)
    family_of = {k: i for i, kids in enumerate(root_children) for k in kids}
    siblings_of = {k: [s for s in kids if s != k] for kids in root_children for k in kids}

    gen1_couples = []
    fi = 0
    for m in free_males:
        if len(gen1_couples) == N_GEN1_COUPLES:
            break
        while fi < len(free_females) and family_of[free_females[fi]] == family_of[m]:
            fi += 1
        if fi >= len(free_females):
            break
        gen1_couples.append((m, free_females[fi]))
        fi += 1
    assert len(gen1_couples) == N_GEN1_COUPLES, "not enough cross-family pairs"

    for dad, mom in gen1_couples:
        kids = [new_person(bool(rng.integers(2))) for _ in range(KIDS_PER_GEN1)]
        emit_family(dad, mom, kids)
        for kid in kids:
            for parent in (dad, mom):
                for sib in siblings_of[parent]:
                    if sib in males:
                        fact("uncle", sib, kid)
                        fact("nephew" if kid in males else "niece", kid, sib)
                    else:
                        fact("aunt", sib, kid)
                        fact("nephew" if kid in males else "niece", kid, sib)

    expected = 2 * N_ROOT_COUPLES + N_ROOT_COUPLES * KIDS_PER_ROOT + N_GEN1_COUPLES * KIDS_PER_GEN1
    assert person_count == expected == 2102, person_count

    out = Path(__file__).resolve().parent.parent / "src" / "ruleforge" / "data" / "kinship.facts"
    out.write_text("% bundled kinship corpus: 2102 persons, 12 relations\n" + "\n".join(facts) + "\n")
    preds = sorted({f.split("(")[0] for f in facts})
    print(f"wrote {out}: {person_count} persons, {len(facts)} facts, {len(preds)} relations: {preds}")


if __name__ == "__main__":
    main()
