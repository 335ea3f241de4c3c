#!/usr/bin/env python3
"""Regenerates the synthetic MultiWOZ-style corpora used by the tests.

    e2e_dialogues.json       10 dialogues, 50 user turns, 0-4 domains per turn
    sampling_dialogues.json  60 user turns in each of the 1..4-domain strata

Output is deterministic; rerun after editing and commit the JSON.
"""

import json
import random
from pathlib import Path

HERE = Path(__file__).resolve().parent
SCHEMA = json.loads((HERE / "../../data/multiwoz22_schema.json").read_text())

DOMAINS = [s["service_name"] for s in SCHEMA]
SLOTS = {s["service_name"]: s["slots"] for s in SCHEMA}

FREE_VALUES = {
    "name": ["acorn guest house", "pizza hut city centre", "the cambridge belfry",
             "kettles yard", "golden wok", "alexander bed and breakfast"],
    "food": ["italian", "chinese", "indian", "british", "modern european"],
    "booktime": ["19:45", "12:30", "18:00", "11:15"],
    "leaveat": ["08:15", "10:00", "17:45", "21:30"],
    "arriveby": ["09:30", "13:00", "16:15", "20:00"],
    "departure": ["cambridge", "london kings cross", "ely", "stansted airport"],
    "destination": ["norwich", "cambridge", "peterborough", "bishops stortford"],
    "type": ["museum", "college", "park", "nightclub"],
    "department": ["paediatric day unit", "neurosciences", "cardiology"],
}
DEFAULT_FREE = ["yes", "centre", "4"]


def value_for(rng, slot):
    if slot["is_categorical"]:
        return rng.choice(slot["possible_values"])
    suffix = slot["name"].split("-", 1)[1]
    return rng.choice(FREE_VALUES.get(suffix, DEFAULT_FREE))


def user_turn(text, state):
    frames = []
    for d in DOMAINS:
        sv = {k: [v] for k, v in state.items() if k.startswith(d + "-")}
        frames.append({"service": d, "state": {"active_intent": "NONE",
                                              "slot_values": sv}})
    return {"speaker": "USER", "utterance": text, "frames": frames}


def system_turn(text):
    return {"speaker": "SYSTEM", "utterance": text, "frames": []}


def add_slots(rng, state, domain, n):
    free = [s for s in SLOTS[domain] if s["name"] not in state]
    rng.shuffle(free)
    added = []
    for s in free[:n]:
        state[s["name"]] = value_for(rng, s)
        added.append(s["name"])
    return added


def describe(state, names):
    return " and ".join(f"{n.split('-', 1)[1]} {state[n]}" for n in names)


def dialogue(rng, dialogue_id, plan, greeting):
    """plan: list of domain lists, one per user turn (new domains to open)."""
    turns = []
    state = {}
    services = []
    for i, new_domains in enumerate(plan):
        if i == 0 and greeting:
            text = f"hello, this is caller {dialogue_id}, can you help me"
            turns.append(user_turn(text, state))
            turns.append(system_turn("of course, what are you looking for?"))
            continue
        added = []
        for d in new_domains:
            if d not in services:
                services.append(d)
            added += add_slots(rng, state, d, rng.randint(1, 2))
        if not new_domains:
            d = rng.choice(services)
            added += add_slots(rng, state, d, 1)
        text = f"for {dialogue_id} turn {i} i want {describe(state, added)}"
        turns.append(user_turn(text, state))
        turns.append(system_turn(f"noted, anything else for {dialogue_id}?"))
    return {"dialogue_id": dialogue_id, "services": services, "turns": turns}


def e2e():
    rng = random.Random(7)
    plans = [
        (True, [[], ["hotel"], [], ["train"], []]),
        (False, [["restaurant"], [], ["taxi"], [], []]),
        (False, [["attraction"], ["restaurant"], ["taxi"], [], []]),
        (True, [[], ["train"], [], [], ["hotel"]]),
        (False, [["hotel", "restaurant"], [], ["attraction"], ["taxi"], []]),
        (False, [["police"], [], [], [], []]),
        (False, [["hospital"], ["taxi"], [], [], []]),
        (True, [[], ["bus"], [], ["attraction"], []]),
        (False, [["train", "hotel", "restaurant"], [], ["taxi"], [], []]),
        (False, [["restaurant"], [], [], ["hotel"], ["train"]]),
    ]
    return [dialogue(rng, f"E{i:02d}.json", plan, greet)
            for i, (greet, plan) in enumerate(plans)]


def sampling():
    rng = random.Random(11)
    out = []
    n = 0
    for k in range(1, 5):
        for _ in range(12):
            doms = rng.sample(DOMAINS[:5], k)
            # Every user turn keeps exactly k active domains.
            plan = [doms] + [[] for _ in range(4)]
            out.append(dialogue(rng, f"S{k}{n:03d}.json", plan, False))
            n += 1
    return out


if __name__ == "__main__":
    (HERE / "e2e_dialogues.json").write_text(json.dumps(e2e(), indent=1) + "\n")
    (HERE / "sampling_dialogues.json").write_text(json.dumps(sampling(), indent=1) + "\n")
