"""Deterministic template corpora in the dataset record format.

Graphs are drawn from four domains (people, buildings, food, airports). Text
realizes each triple with a relation-specific template, walking the graph
breadth-first from its main entity with a fixed relation priority, so the
word order carries learnable relation preferences.
"""
from __future__ import annotations

import json
import os
from importlib import resources

import numpy as np

FIRST = ["anna", "boris", "carla", "dmitri", "elena", "felix", "greta", "hugo", "irene", "jonas",
         "karla", "leon", "maria", "nils", "olga", "pavel", "rosa", "stefan", "tanja", "viktor"]
LAST = ["berg", "costa", "dahl", "engel", "fischer", "grant", "holm", "ivanova", "jensen", "kovac",
        "lund", "moreau", "novak", "olsen", "petrov", "quist", "richter", "sato", "tamm", "weber"]
CITIES = {
    "aarhus": "denmark", "bergen": "norway", "cordoba": "argentina", "dresden": "germany",
    "eindhoven": "netherlands", "florence": "italy", "gdansk": "poland", "halifax": "canada",
    "innsbruck": "austria", "jena": "germany", "kyoto": "japan", "leiden": "netherlands",
    "malmo": "sweden", "nantes": "france", "oporto": "portugal", "perugia": "italy",
    "quebec": "canada", "rennes": "france", "salzburg": "austria", "turku": "finland",
    "utrecht": "netherlands", "valencia": "spain", "york": "england", "zagreb": "croatia",
}
OCCUPATIONS = ["painter", "chemist", "novelist", "composer", "engineer", "physician", "botanist",
               "sculptor", "astronomer", "poet"]
AWARDS = ["nobel prize", "turing award", "pritzker prize", "fields medal", "booker prize", "wolf prize"]
BUILDING_ADJ = ["north", "grand", "silver", "crystal", "harbour", "royal", "liberty", "union",
                "orchard", "summit"]
BUILDING_KIND = ["tower", "hall", "palace", "library", "museum", "house"]
DISH_PREFIX = ["apple", "bean", "cabbage", "cherry", "lentil", "mushroom", "onion", "potato",
               "pumpkin", "rice", "walnut", "fish"]
DISH_KIND = ["stew", "pie", "soup", "tart", "dumplings", "salad", "curry", "bread"]
INGREDIENTS = ["butter", "garlic", "honey", "cream", "pepper", "ginger", "saffron", "flour", "cheese",
               "vinegar", "thyme", "sugar"]
COURSES = ["main course", "dessert", "starter", "side dish", "snack"]
OPERATORS = ["civil aviation board", "skyways group", "aerodrome trust", "national airports company",
             "harbour authority", "air navigation agency"]

TEMPLATES = {
    "birth_place": ("{h} was born in {t} .", 0),
    "nationality": ("{h} is a citizen of {t} .", 1),
    "occupation": ("{h} works as a {t} .", 2),
    "alma_mater": ("{h} studied at {t} .", 3),
    "award": ("{h} received the {t} .", 4),
    "spouse": ("{h} is married to {t} .", 5),
    "country": ("{h} is located in {t} .", 6),
    "campus_city": ("{h} is in {t} .", 7),
    "location": ("{h} stands in {t} .", 0),
    "architect": ("{h} was designed by {t} .", 1),
    "completion_year": ("{h} was completed in {t} .", 2),
    "floor_count": ("{h} has {t} floors .", 3),
    "origin": ("{h} comes from {t} .", 0),
    "ingredient": ("{h} contains {t} .", 1),
    "course": ("{h} is served as a {t} .", 2),
    "city_served": ("{h} serves the city of {t} .", 0),
    "runway_length": ("{h} has a runway length of {t} metres .", 1),
    "operator": ("{h} is operated by {t} .", 2),
}


def _pick(rng, pool):
    return pool[int(rng.integers(len(pool)))]


def _person(rng) -> str:
    return f"{_pick(rng, FIRST)} {_pick(rng, LAST)}"


def _person_graph(rng, budget):
    p = _person(rng)
    city = _pick(rng, list(CITIES))
    options = [("birth_place", city), ("occupation", _pick(rng, OCCUPATIONS)),
               ("nationality", CITIES[city]), ("award", _pick(rng, AWARDS))]
    uni_city = _pick(rng, list(CITIES))
    options.append(("alma_mater", f"university of {uni_city}"))
    spouse = _person(rng)
    while spouse == p:
        spouse = _person(rng)
    options.append(("spouse", spouse))
    chosen = [options[i] for i in sorted(rng.choice(len(options), size=min(budget, len(options)), replace=False))]
    triples = [(p, r, t) for r, t in chosen]
    extras = []
    if ("birth_place", city) in chosen and ("nationality", CITIES[city]) not in chosen:
        extras.append((city, "country", CITIES[city]))
    if ("alma_mater", f"university of {uni_city}") in chosen:
        extras.append((f"university of {uni_city}", "campus_city", uni_city))
    for tr in extras:
        if len(triples) < budget + 1 and rng.random() < 0.6:
            triples.append(tr)
    return p, triples


def _building_graph(rng, budget):
    b = f"{_pick(rng, BUILDING_ADJ)} {_pick(rng, BUILDING_KIND)}"
    city = _pick(rng, list(CITIES))
    arch = _person(rng)
    options = [("location", city), ("architect", arch),
               ("completion_year", str(int(rng.integers(1850, 2020)))),
               ("floor_count", str(int(rng.integers(3, 90))))]
    chosen = [options[i] for i in sorted(rng.choice(len(options), size=min(budget, len(options)), replace=False))]
    triples = [(b, r, t) for r, t in chosen]
    if ("location", city) in chosen and rng.random() < 0.6:
        triples.append((city, "country", CITIES[city]))
    if ("architect", arch) in chosen and rng.random() < 0.5:
        triples.append((arch, "nationality", _pick(rng, sorted(set(CITIES.values())))))
    return b, triples


def _food_graph(rng, budget):
    f = f"{_pick(rng, DISH_PREFIX)} {_pick(rng, DISH_KIND)}"
    ingr = [str(x) for x in rng.choice(INGREDIENTS, size=2, replace=False)]
    options = [("origin", _pick(rng, sorted(set(CITIES.values())))), ("ingredient", ingr[0]),
               ("course", _pick(rng, COURSES)), ("ingredient", ingr[1])]
    chosen = [options[i] for i in sorted(rng.choice(len(options), size=min(budget, len(options)), replace=False))]
    return f, [(f, r, t) for r, t in chosen]


def _airport_graph(rng, budget):
    city = _pick(rng, list(CITIES))
    a = f"{city} {_pick(rng, ['international', 'regional'])} airport"
    options = [("city_served", city), ("runway_length", str(int(rng.integers(24, 80)) * 50)),
               ("operator", _pick(rng, OPERATORS))]
    chosen = [options[i] for i in sorted(rng.choice(len(options), size=min(budget, len(options)), replace=False))]
    triples = [(a, r, t) for r, t in chosen]
    if ("city_served", city) in chosen and rng.random() < 0.6:
        triples.append((city, "country", CITIES[city]))
    return a, triples


DOMAINS = (_person_graph, _building_graph, _food_graph, _airport_graph)


def realize(root: str, triples: list[tuple[str, str, str]]) -> dict:
    """Render triples breadth-first from ``root``; record each entity's first placement."""
    depth = {root: 0}
    frontier = [root]
    while frontier:
        nxt = []
        for node in frontier:
            for h, _, t in triples:
                for a, b in ((h, t), (t, h)):
                    if a == node and b not in depth:
                        depth[b] = depth[a] + 1
                        nxt.append(b)
        frontier = nxt
    ordered = sorted(range(len(triples)),
                     key=lambda i: (depth.get(triples[i][0], 99), TEMPLATES[triples[i][1]][1], i))
    # consecutive clauses sharing a leading head are aggregated: "h p1 t1 , p2 t2 and p3 t3 ."
    groups: list[list[int]] = []
    for i in ordered:
        h, r, _ = triples[i]
        lead = TEMPLATES[r][0].startswith("{h}")
        if groups and lead and triples[groups[-1][0]][0] == h and TEMPLATES[triples[groups[-1][0]][1]][0].startswith("{h}"):
            groups[-1].append(i)
        else:
            groups.append([i])
    words: list[str] = []
    first: dict[str, tuple[int, int]] = {}

    def emit(pieces, h, t):
        for piece in pieces:
            if piece in ("{h}", "{t}"):
                name = h if piece == "{h}" else t
                toks = name.split()
                first.setdefault(name, (len(words), len(words) + len(toks) - 1))
                words.extend(toks)
            else:
                words.append(piece)

    for group in groups:
        for k, i in enumerate(group):
            h, r, t = triples[i]
            pieces = TEMPLATES[r][0].split()[:-1]
            if k > 0:
                words.append("and" if k == len(group) - 1 else ",")
                pieces = pieces[1:]
            emit(pieces, h, t)
        words.append(".")
    mentions = sorted(([name, s, e] for name, (s, e) in first.items()), key=lambda m: m[1])
    return {"triples": [list(t) for t in triples], "text": " ".join(words), "mentions": mentions}


def generate_corpus(n: int, seed: int, max_triples: int = 5) -> list[dict]:
    rng = np.random.default_rng(seed)
    records = []
    while len(records) < n:
        domain = DOMAINS[int(rng.integers(len(DOMAINS)))]
        budget = int(rng.integers(1, max_triples))
        root, triples = domain(rng, budget)
        triples = triples[:max_triples]
        if len({(h, r, t) for h, r, t in triples}) != len(triples):
            continue
        records.append(realize(root, triples))
    return records


def write_corpus(records: list[dict], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


SYNTHETIC_16 = "synthetic16.jsonl"
WEBNLG_STYLE_500 = "webnlg_style500.jsonl"


def fixture_path(name: str) -> str:
    """Path of a fixture corpus shipped under ``kgtext/data``."""
    return str(resources.files("kgtext") / "data" / name)


def regenerate(directory: str | os.PathLike | None = None) -> None:
    directory = directory or str(resources.files("kgtext") / "data")
    write_corpus(generate_corpus(16, seed=16), os.path.join(directory, SYNTHETIC_16))
    write_corpus(generate_corpus(500, seed=500), os.path.join(directory, WEBNLG_STYLE_500))
