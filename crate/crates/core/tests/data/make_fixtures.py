#!/usr/bin/env python3
"""Regenerate the WNDB-format WordNet fixtures used by the test suite.

Two taxonomies are written:

  wordnet-tiny/  eight noun synsets (entity > organism > {person, animal} ...)
  wordnet-mini/  a superset with verbs, adjectives, adverbs and enough
                 synonym-rich vocabulary for the synthetic paraphrase corpus

Byte offsets are computed exactly, so the files are valid WNDB as far as the
fields the loader reads are concerned.

Usage: python3 make_fixtures.py   (run from this directory)
"""

import os

LICENSE = [
    "  1 This is a reduced WordNet-format fixture for tests.",
    "  2 Its layout mirrors the WordNet 3.0 database files.",
]

POS_FILE = {"n": "noun", "v": "verb", "a": "adj", "r": "adv"}

# Each synset: (key, pos, ss_type, lexfile, lemmas, hypernym keys, gloss)
TINY = [
    ("entity", "n", "n", 3, ["entity"], [], "that which exists"),
    ("organism", "n", "n", 3, ["organism", "being"], ["entity"], "a living thing"),
    ("person", "n", "n", 18, ["person", "individual"], ["organism"], "a human being"),
    ("animal", "n", "n", 5, ["animal", "beast"], ["organism"], "a living creature"),
    ("dog", "n", "n", 5, ["dog", "domestic_dog"], ["animal"], "a domesticated canid"),
    ("cat", "n", "n", 5, ["cat", "true_cat"], ["animal"], "a feline mammal"),
    ("man", "n", "n", 18, ["man", "adult_male"], ["person"], "an adult male person"),
    ("woman", "n", "n", 18, ["woman", "adult_female"], ["person"], "an adult female person"),
]

MINI_EXTRA = [
    # nouns
    ("child", "n", "n", 18, ["child", "kid", "youngster"], ["person"], "a young person"),
    ("friend", "n", "n", 18, ["friend", "pal", "buddy"], ["person"], "a person you know well"),
    ("doctor", "n", "n", 18, ["doctor", "physician", "medic"], ["person"], "a medical practitioner"),
    ("teacher", "n", "n", 18, ["teacher", "instructor", "tutor"], ["person"], "a person who teaches"),
    ("chef", "n", "n", 18, ["chef", "cook"], ["person"], "a professional cook"),
    ("horse", "n", "n", 5, ["horse", "steed", "equine"], ["animal"], "a hoofed mammal"),
    ("bird", "n", "n", 5, ["bird", "fowl"], ["animal"], "a feathered vertebrate"),
    ("plant", "n", "n", 20, ["plant", "flora"], ["organism"], "a living organism lacking locomotion"),
    ("tree", "n", "n", 20, ["tree"], ["plant"], "a tall perennial plant"),
    ("flower", "n", "n", 20, ["flower", "bloom", "blossom"], ["plant"], "a plant cultivated for its blooms"),
    ("object", "n", "n", 3, ["object", "physical_object"], ["entity"], "a tangible thing"),
    ("artifact", "n", "n", 6, ["artifact", "artefact"], ["object"], "a man-made object"),
    ("rope", "n", "n", 6, ["rope", "cord"], ["artifact"], "a strong line"),
    ("vehicle", "n", "n", 6, ["vehicle", "conveyance"], ["artifact"], "a means of transport"),
    ("car", "n", "n", 6, ["car", "auto", "automobile"], ["vehicle"], "a motor vehicle"),
    ("boat", "n", "n", 6, ["boat", "ship", "vessel"], ["vehicle"], "a watercraft"),
    ("bicycle", "n", "n", 6, ["bicycle", "bike", "cycle"], ["vehicle"], "a two-wheeled vehicle"),
    ("building", "n", "n", 6, ["building", "edifice"], ["artifact"], "a structure with a roof"),
    ("house", "n", "n", 6, ["house", "home", "dwelling"], ["building"], "a dwelling"),
    ("store", "n", "n", 6, ["store", "shop"], ["building"], "a mercantile establishment"),
    ("knife", "n", "n", 6, ["knife", "blade"], ["artifact"], "an edge tool"),
    ("picture", "n", "n", 6, ["picture", "image", "photo"], ["artifact"], "a visual representation"),
    ("road", "n", "n", 6, ["road", "route"], ["artifact"], "an open way for travel"),
    ("book", "n", "n", 6, ["book", "volume"], ["artifact"], "a written work"),
    ("matter", "n", "n", 27, ["matter"], ["entity"], "that which has mass"),
    ("liquid", "n", "n", 27, ["liquid"], ["matter"], "a fluid substance"),
    ("water", "n", "n", 27, ["water", "h2o"], ["liquid"], "a clear liquid"),
    ("food", "n", "n", 13, ["food", "nutrient"], ["matter"], "any nutritious substance"),
    ("bread", "n", "n", 13, ["bread", "loaf"], ["food"], "baked dough"),
    ("meal", "n", "n", 13, ["meal", "repast"], ["food"], "the food served at one time"),
    ("material", "n", "n", 27, ["material", "stuff"], ["matter"], "the substance of a thing"),
    ("paper", "n", "n", 27, ["paper"], ["material"], "a thin sheet material"),
    ("stone", "n", "n", 27, ["stone", "rock"], ["material"], "a lump of hard mineral"),
    ("location", "n", "n", 15, ["location"], ["entity"], "a point or extent in space"),
    ("city", "n", "n", 15, ["city", "metropolis"], ["location"], "a large town"),
    ("forest", "n", "n", 15, ["forest", "woods", "woodland"], ["location"], "land covered with trees"),
    ("hill", "n", "n", 15, ["hill", "mound"], ["location"], "a raised landform"),
    ("shore", "n", "n", 15, ["shore", "beach", "coast"], ["location"], "land along water"),
    ("room", "n", "n", 15, ["room", "chamber"], ["location"], "an area within a building"),
    ("abstraction", "n", "n", 3, ["abstraction"], ["entity"], "a general concept"),
    ("song", "n", "n", 10, ["song", "tune", "melody"], ["abstraction"], "a musical composition"),
    ("gift", "n", "n", 21, ["gift", "present"], ["abstraction"], "something given"),
    ("game", "n", "n", 4, ["game", "match"], ["abstraction"], "a contest with rules"),
    ("job", "n", "n", 4, ["job", "occupation", "career"], ["abstraction"], "the principal activity of one's life"),
    # verbs
    ("travel", "v", "v", 38, ["travel", "go", "move", "locomote"], [], "change location"),
    ("climb", "v", "v", 38, ["climb", "ascend", "mount"], ["travel"], "go upward"),
    ("jump", "v", "v", 38, ["jump", "leap", "spring"], ["travel"], "move forward by leaps"),
    ("run", "v", "v", 38, ["run", "sprint", "dash"], ["travel"], "move fast on foot"),
    ("walk", "v", "v", 38, ["walk", "stroll", "amble"], ["travel"], "use one's feet to advance"),
    ("carry", "v", "v", 38, ["carry", "transport", "haul"], ["travel"], "move while supporting"),
    ("swim", "v", "v", 38, ["swim"], ["travel"], "travel through water"),
    ("change", "v", "v", 30, ["change", "alter", "modify"], [], "cause to be different"),
    ("cut", "v", "v", 35, ["cut", "slice"], ["change"], "separate with an edge"),
    ("break", "v", "v", 30, ["break", "smash", "shatter"], ["change"], "destroy the integrity of"),
    ("fix", "v", "v", 30, ["fix", "repair", "mend"], ["change"], "restore by replacing a part"),
    ("make", "v", "v", 36, ["make", "create", "produce"], [], "bring into existence"),
    ("build", "v", "v", 36, ["build", "construct"], ["make"], "make by combining materials"),
    ("cook", "v", "v", 36, ["cook", "prepare"], ["make"], "prepare a hot meal"),
    ("write", "v", "v", 36, ["write", "compose", "author"], ["make"], "produce a literary work"),
    ("paint", "v", "v", 36, ["paint"], ["make"], "make a painting"),
    ("consume", "v", "v", 34, ["consume", "ingest"], [], "serve oneself to"),
    ("eat", "v", "v", 34, ["eat", "devour"], ["consume"], "take in solid food"),
    ("drink", "v", "v", 34, ["drink", "imbibe", "sip"], ["consume"], "take in liquids"),
    ("perceive", "v", "v", 39, ["perceive", "sense"], [], "become aware of"),
    ("see", "v", "v", 39, ["see", "watch", "view"], ["perceive"], "perceive by sight"),
    ("hear", "v", "v", 39, ["hear", "listen"], ["perceive"], "perceive sound"),
    ("communicate", "v", "v", 32, ["communicate", "convey"], [], "transmit information"),
    ("speak", "v", "v", 32, ["speak", "talk", "chat"], ["communicate"], "express in speech"),
    ("shout", "v", "v", 32, ["shout", "yell", "holler"], ["speak"], "utter a sudden loud cry"),
    ("sing", "v", "v", 32, ["sing", "chant"], ["communicate"], "produce tones with the voice"),
    ("get", "v", "v", 40, ["get", "acquire", "obtain"], [], "come into possession of"),
    ("buy", "v", "v", 40, ["buy", "purchase"], ["get"], "obtain by payment"),
    ("find", "v", "v", 40, ["find", "discover", "locate"], ["get"], "come upon"),
    ("touch", "v", "v", 35, ["touch"], [], "make physical contact"),
    ("hold", "v", "v", 35, ["hold", "grasp", "grip"], ["touch"], "have in one's hands"),
    ("throw", "v", "v", 35, ["throw", "toss", "fling"], ["touch"], "propel through the air"),
    ("feel", "v", "v", 37, ["feel", "experience"], [], "undergo an emotional sensation"),
    ("like", "v", "v", 37, ["like", "enjoy", "love"], ["feel"], "find enjoyable"),
    # adjectives
    ("happy", "a", "a", 0, ["happy", "glad", "joyful"], [], "enjoying well-being"),
    ("big", "a", "a", 0, ["big", "large", "huge"], [], "above average in size"),
    ("small", "a", "a", 0, ["small", "little", "tiny"], [], "limited in size"),
    ("fast", "a", "a", 0, ["fast", "quick", "rapid"], [], "acting with speed"),
    ("old", "a", "a", 0, ["old", "aged", "elderly"], [], "advanced in years"),
    ("new", "a", "s", 0, ["new", "fresh", "novel"], [], "not previously known"),
    ("pretty", "a", "s", 0, ["pretty", "lovely", "beautiful"], [], "pleasing to the eye"),
    ("angry", "a", "a", 0, ["angry", "mad", "furious"], [], "feeling anger"),
    ("red", "a", "a", 0, ["red"], [], "having the color of blood"),
    # adverbs
    ("quickly", "r", "r", 2, ["quickly", "rapidly", "speedily"], [], "with speed"),
    ("slowly", "r", "r", 2, ["slowly"], [], "without speed"),
]

TINY_EXC = {"noun": ["men man", "women woman"], "verb": [], "adj": [], "adv": []}

MINI_EXC = {
    "noun": ["children child", "men man", "women woman"],
    "verb": [
        "ate eat", "bought buy", "broke break", "built build", "drank drink",
        "drove drive", "found find", "went go", "heard hear", "held hold",
        "leapt leap", "ran run", "sang sing", "saw see", "spoke speak",
        "swam swim", "threw throw", "wrote write",
    ],
    "adj": ["bigger big", "happier happy", "smaller small"],
    "adv": [],
}


def write_fixture(directory, synsets, exceptions):
    os.makedirs(directory, exist_ok=True)
    by_pos = {p: [s for s in synsets if s[1] == p] for p in POS_FILE}
    keys = {s[0]: s for s in synsets}
    hypo = {}
    for s in synsets:
        for h in s[5]:
            hypo.setdefault(h, []).append(s[0])

    def data_line(s, offsets):
        key, pos, ss_type, lexfile, lemmas, hypers, gloss = s
        parts = ["%08d" % offsets[key], "%02d" % lexfile, ss_type, "%02x" % len(lemmas)]
        for lemma in lemmas:
            parts += [lemma, "0"]
        ptrs = [("@", h) for h in hypers] + [("~", h) for h in hypo.get(key, [])]
        parts.append("%03d" % len(ptrs))
        for sym, target in ptrs:
            parts += [sym, "%08d" % offsets[target], keys[target][1], "0000"]
        if pos == "v":
            parts += ["01", "+", "02", "00"]
        return " ".join(parts) + " | " + gloss + "  \n"

    # All offsets are eight digits, so line lengths do not depend on them.
    offsets = {s[0]: 0 for s in synsets}
    for pos, name in POS_FILE.items():
        pos_offsets = {}
        cursor = sum(len(l) + 1 for l in LICENSE)
        for s in by_pos[pos]:
            pos_offsets[s[0]] = cursor
            cursor += len(data_line(s, offsets).encode())
        offsets.update(pos_offsets)

    for pos, name in POS_FILE.items():
        with open(os.path.join(directory, "data." + name), "w") as f:
            for line in LICENSE:
                f.write(line + "\n")
            for s in by_pos[pos]:
                f.write(data_line(s, offsets))

        index = {}
        for s in by_pos[pos]:
            for lemma in s[4]:
                index.setdefault(lemma.lower(), []).append(s)
        with open(os.path.join(directory, "index." + name), "w") as f:
            for line in LICENSE:
                f.write(line + "\n")
            for lemma in sorted(index):
                entries = index[lemma]
                symbols = sorted({"@" for s in entries if s[5]} | {"~" for s in entries if hypo.get(s[0])})
                parts = [lemma, pos, str(len(entries)), str(len(symbols))] + symbols
                parts += [str(len(entries)), "0"]
                parts += ["%08d" % offsets[s[0]] for s in entries]
                f.write(" ".join(parts) + "  \n")

        with open(os.path.join(directory, name + ".exc"), "w") as f:
            for line in sorted(exceptions[name]):
                f.write(line + "\n")


if __name__ == "__main__":
    here = os.path.dirname(os.path.abspath(__file__))
    write_fixture(os.path.join(here, "wordnet-tiny"), TINY, TINY_EXC)
    write_fixture(os.path.join(here, "wordnet-mini"), TINY + MINI_EXTRA, MINI_EXC)
