#!/usr/bin/env python3
"""Expected metrics for the 50-turn pipeline fixture when the domain model
swaps one domain per turn: the first gold domain (ontology order) is dropped
and the first non-gold domain is added. The slot model is gold-scripted, so
the dropped domain's slots go missing and the added domain's slots stay
empty. Writes tests/data/e2e_degraded_expected.json (--check to verify).
"""

import json
import sys

from metrics_oracle import ORDER, ROOT, score, write_or_check

DATA = ROOT / "tests/data"


def examples():
    for d in json.loads((DATA / "e2e_dialogues.json").read_text()):
        for i, t in enumerate(d["turns"]):
            if t["speaker"] != "USER":
                continue
            state = {}
            for f in t["frames"]:
                for slot, vals in f["state"]["slot_values"].items():
                    if vals:
                        state[slot] = vals[0]
            yield state


def degrade(gold):
    doms = {k.split("-", 1)[0] for k in gold}
    present = [d for d in ORDER if d in doms]
    dropped = present[0] if present else None
    added = next(d for d in ORDER if d not in doms)
    pred_domains = (doms - {dropped}) | {added}
    pred_state = {k: v for k, v in gold.items() if k.split("-", 1)[0] != dropped}
    return pred_domains, pred_state


def main():
    pairs = [(g, *degrade(g)) for g in examples()]
    assert len(pairs) == 50, len(pairs)
    write_or_check(score(pairs), DATA / "e2e_degraded_expected.json", "--check" in sys.argv)


if __name__ == "__main__":
    main()
