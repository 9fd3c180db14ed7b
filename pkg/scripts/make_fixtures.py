"""Regenerate the bundled fixture corpus, question sets and toy vocabulary.

The world is fictional and seeded, so every fact a question needs is in the
corpus and nowhere else.

    python scripts/make_fixtures.py
"""
import json
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1] / "src" / "statedelta" / "assets"
FIXTURES = ROOT / "fixtures"
TEMPLATES = ROOT / "templates"

ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "kr", "tr", "th", "sh", "st", "gr", "vel", "mor"]
VOWELS = ["a", "e", "i", "o", "u", "ae", "ai", "ou", "ea"]
CODAS = ["", "n", "r", "s", "th", "l", "m", "k", "nd", "rn", "st"]
PROFESSIONS = ["novelist", "painter", "composer", "architect", "astronomer", "playwright", "cartographer", "sculptor"]
WORK_KINDS = {
    "novelist": "novel",
    "painter": "painting",
    "composer": "symphony",
    "architect": "building",
    "astronomer": "star atlas",
    "playwright": "play",
    "cartographer": "map",
    "sculptor": "statue",
}
WORK_NOUNS = ["Ledger", "Harbor", "Lantern", "Orchard", "Compass", "Tide", "Meadow", "Citadel", "Mirror", "Garden",
              "Bell", "Frontier", "Archive", "Caravan", "Winter", "Signal", "Bridge", "Crown", "River", "Tower"]
WORK_ADJS = ["Salt", "Silent", "Amber", "Hollow", "Iron", "Glass", "Copper", "Northern", "Last", "Quiet",
             "Scarlet", "Distant", "Broken", "Golden", "Pale", "Wandering"]


def name(rng, used, syllables=2):
    while True:
        s = "".join(rng.choice(ONSETS) + rng.choice(VOWELS) for _ in range(syllables)) + rng.choice(CODAS)
        s = s.capitalize()
        if s not in used and 4 <= len(s) <= 11:
            used.add(s)
            return s


def build(seed=2024):
    rng = random.Random(seed)
    used = set()
    provinces = [name(rng, used) for _ in range(12)]
    rivers = [name(rng, used) + " River" for _ in range(12)]
    towns = []
    for _ in range(40):
        towns.append(
            {
                "name": name(rng, used),
                "province": rng.choice(provinces),
                "river": rng.choice(rivers),
                "founded": rng.randint(1200, 1850),
                "population": rng.randint(2, 400) * 100,
            }
        )
    people = []
    for _ in range(50):
        prof = rng.choice(PROFESSIONS)
        people.append(
            {
                "name": f"{name(rng, used)} {name(rng, used)}",
                "birthplace": rng.choice(towns),
                "profession": prof,
                "born": rng.randint(1780, 1960),
            }
        )
    works = []
    titles = set()
    while len(works) < 40:
        title = f"The {rng.choice(WORK_ADJS)} {rng.choice(WORK_NOUNS)}"
        if title in titles:
            continue
        titles.add(title)
        creator = rng.choice(people)
        works.append({"title": title, "creator": creator, "year": creator["born"] + rng.randint(20, 60)})

    docs = []

    def add(title, first, rest):
        docs.append({"id": f"d{len(docs):03d}", "title": title, "text": first + ("\n" + rest if rest else "")})

    for p in provinces:
        cap = next((t for t in towns if t["province"] == p), None)
        members = [t["name"] for t in towns if t["province"] == p]
        add(
            p,
            f"{p} is a province in the northern highlands.",
            (f"Its capital is {cap['name']}. " if cap else "")
            + f"The province contains {len(members)} chartered towns. Its council meets twice a year.",
        )
    for r in rivers:
        through = [t["name"] for t in towns if t["river"] == r]
        add(
            r,
            f"The {r} is a river that drains the eastern valleys.",
            (f"It flows through {', '.join(through)}. " if through else "It flows through no chartered town. ")
            + f"The {r} freezes in most winters.",
        )
    for t in towns:
        add(
            t["name"],
            f"{t['name']} is a town in the province of {t['province']}.",
            f"It was founded in {t['founded']}. The {t['river']} flows through {t['name']}. "
            f"The town has a population of about {t['population']}. Its market is held on the first day of each month.",
        )
    for p in people:
        b = p["birthplace"]
        own = [w["title"] for w in works if w["creator"] is p]
        add(
            p["name"],
            f"{p['name']} was a {p['profession']} born in {p['born']} in the town of {b['name']}.",
            (f"{p['name']} is best known for {', '.join(own)}. " if own else "")
            + f"Before working as a {p['profession']}, {p['name'].split()[0]} studied in {rng.choice(towns)['name']}.",
        )
    for w in works:
        c = w["creator"]
        kind = WORK_KINDS[c["profession"]]
        add(
            w["title"],
            f"{w['title']} is a {kind} by {c['name']}, completed in {w['year']}.",
            f"Critics praised {w['title']} for its restraint. It was first shown in {rng.choice(towns)['name']}.",
        )
    festivals = 200 - len(docs)
    for i in range(festivals):
        t = rng.choice(towns)
        fname = f"{name(rng, used)} Festival"
        add(
            fname,
            f"The {fname} is an annual gathering held in {t['name']}.",
            f"It began in {t['founded'] + rng.randint(10, 150)}. Visitors come from across {t['province']} for the music and the lantern parade.",
        )

    questions = []

    def q(qid, question, answers, kind):
        questions.append({"id": qid, "question": question, "answers": answers, "kind": kind})

    for i, w in enumerate(rng.sample(works, 10)):
        q(f"open-{i}", f"In which province was the creator of {w['title']} born?", [w["creator"]["birthplace"]["province"]], "open")
    for i in range(5):
        a, b = rng.sample(people, 2)
        same = a["birthplace"]["province"] == b["birthplace"]["province"]
        if i < 2 and not same:
            # guarantee some "yes" cases
            b = next(p for p in people if p is not a and p["birthplace"]["province"] == a["birthplace"]["province"])
            same = True
        q(f"yesno-{i}", f"Were {a['name']} and {b['name']} born in the same province?", ["yes" if same else "no"], "yesno")
    for i, t in enumerate(rng.sample(towns, 5)):
        options = [t["river"]] + rng.sample([r for r in rivers if r != t["river"]], 3)
        rng.shuffle(options)
        letter = "ABCD"[options.index(t["river"])]
        opts = " ".join(f"({l}) {o}" for l, o in zip("ABCD", options))
        q(f"choice-{i}", f"Which river flows through {t['name']}? {opts}", [letter], "choice")
    for i in range(3):
        shelves, per, removed = rng.randint(3, 12), rng.randint(10, 40), rng.randint(1, 9)
        q(
            f"numeric-{i}",
            f"A library has {shelves} shelves with {per} books on each shelf. {removed} books are lent out. How many books remain on the shelves?",
            [str(shelves * per - removed)],
            "numeric",
        )
    p1, p2 = rng.sample(people, 2)
    q("fever-0", f"{p1['name']} was born in {p1['birthplace']['name']}.", ["SUPPORTS"], "fever")
    wrong = next(t for t in towns if t is not p2["birthplace"])
    q("fever-1", f"{p2['name']} was born in {wrong['name']}.", ["REFUTES"], "fever")

    selection = []
    for i, w in enumerate(rng.sample(works, 8)):
        selection.append(
            {"id": f"sel-{i}", "question": f"Who created {w['title']}?", "answers": [w["creator"]["name"]], "kind": "open"}
        )
    return docs, questions, selection


def write_jsonl(rows, path):
    with open(path, "w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps(r, ensure_ascii=False) + "\n")


def main():
    import sys

    sys.path.insert(0, str(ROOT.parents[1]))
    from statedelta.model.tokenizer import Tokenizer

    docs, questions, selection = build()
    FIXTURES.mkdir(parents=True, exist_ok=True)
    write_jsonl(docs, FIXTURES / "corpus.jsonl")
    write_jsonl(questions, FIXTURES / "questions.jsonl")
    write_jsonl(selection, FIXTURES / "selection.jsonl")
    texts = [d["title"] + "\n" + d["text"] for d in docs]
    texts += [q["question"] for q in questions + selection]
    texts += [p.read_text(encoding="utf-8") for p in sorted(TEMPLATES.glob("*.txt"))]
    texts += ["<system>\n</system>\n<user>\n</user>\n<assistant>\n</assistant>\n"] * 2
    Tokenizer.train(texts, max_pieces=4096, min_count=1).save(FIXTURES / "vocab.json")
    print(f"{len(docs)} docs, {len(questions)} questions, {len(selection)} selection questions")


if __name__ == "__main__":
    main()
