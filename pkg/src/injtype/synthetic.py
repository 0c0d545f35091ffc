"""Template-based synthetic news corpora for tests, demos and overfitting checks."""

import numpy as np

from .corpus import Entity, Example

POOLS = {
    "Person": [
        "Gordon_Brown", "Hamid_Karzai", "Dick_Cheney", "Tony_Snow",
        "Wen_Jiabao", "Vladimir_Putin", "George_W._Bush", "Angela_Merkel",
    ],
    "Country": ["US", "Afghanistan", "China", "Russia", "Britain", "France", "Japan", "India"],
    "Location": ["Bucharest", "Moscow", "Camp_David", "Geneva", "Beijing", "Kabul"],
    "Weekday": ["Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday"],
    "Organization": ["NATO", "WTO", "White_House", "Interfax_news_agency", "United_Nations", "IMF"],
}

# every template has a distinct sequence of slot types
TEMPLATES = [
    "{Country} vice president {Person} made a surprise visit to {Country} on {Weekday} for talks with president {Person} .",
    "{Organization} said on {Weekday} that {Person} will travel to {Location} next month .",
    "{Person} and {Person} met in {Location} to discuss the crisis .",
    "officials from {Country} and {Country} signed a trade accord in {Location} on {Weekday} , {Organization} reported .",
    "{Person} , the head of {Organization} , told reporters in {Location} that talks with {Country} resume on {Weekday} .",
    "the {Organization} summit in {Location} opened on {Weekday} with a speech by {Person} .",
]


def template_slots(template):
    return [tok[1:-1] for tok in template.split() if tok.startswith("{") and tok.endswith("}")]


def fill_template(template, rng):
    used = {}
    entities, target = [], []
    for tok in template.split():
        if tok.startswith("{") and tok.endswith("}"):
            etype = tok[1:-1]
            taken = used.setdefault(etype, set())
            choices = [m for m in POOLS[etype] if m not in taken]
            mention = choices[int(rng.integers(len(choices)))]
            taken.add(mention)
            entities.append(Entity(mention, etype))
            target.append(mention)
        else:
            target.append(tok)
    return Example(entities, target)


def make_corpus(n_examples, seed=0, templates=None):
    """``n_examples`` records cycling through the templates with random fillers."""
    templates = TEMPLATES if templates is None else templates
    rng = np.random.default_rng(seed)
    return [fill_template(templates[i % len(templates)], rng) for i in range(n_examples)]


def random_entity_lists(count, seed=0, min_entities=1, max_entities=8):
    """Arbitrary entity lists (no target), for order-guarantee checks."""
    rng = np.random.default_rng(seed)
    types = sorted(POOLS)
    out = []
    for _ in range(count):
        n = int(rng.integers(min_entities, max_entities + 1))
        ents = []
        for _ in range(n):
            etype = types[int(rng.integers(len(types)))]
            pool = POOLS[etype]
            ents.append(Entity(pool[int(rng.integers(len(pool)))], etype))
        out.append(ents)
    return out
