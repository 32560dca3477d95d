#!/usr/bin/env python3
"""Writes the small synthetic fixture corpus under data/fixtures.

Four works with six characters each. Every biography carries its own rare
words (checked against data/zipf_en.tsv), and in the gold dialogues each
speaker stays on a theme while referring back to the other speaker's life,
so the interlocutor's side of a dialogue says a lot about the tested speaker.
"""

import json
import random
import re
from itertools import combinations
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "data" / "fixtures"

WORKS = {
    "harbour-tales": ["Maren", "Tobias", "Isolde", "Caspar", "Wren", "Ansel"],
    "night-orchestra": ["Livia", "Dorian", "Celeste", "Rupert", "Odile", "Fabian"],
    "market-street": ["Greta", "Lorcan", "Perpetua", "Silas", "Yvette", "Ambrose"],
    "frontier-garrison": ["Hester", "Bram", "Ottoline", "Cyrus", "Zelda", "Leopold"],
}
GENDER = ["female", "male"]
MBTI = ["INTJ", "ENFP", "ISTP", "ESFJ", "INFJ", "ENTP", "ISFP", "ESTJ"]

OCCUPATION = ["lighthouse keeper", "cartographer", "taxidermist", "glassblower", "beekeeper", "locksmith",
              "harpist", "bookbinder", "apothecary", "falconer", "clockmaker", "saddler",
              "cooper", "chandler", "milliner", "tanner", "wheelwright", "engraver",
              "farrier", "scrivener", "vintner", "ropemaker", "tinsmith", "stonemason"]
TOWN = ["Kestrelby", "Marrowfen", "Thistlecombe", "Gullhaven", "Brackenmoor", "Quillford",
        "Ashgrove", "Wickerly", "Fernhollow", "Dunmere", "Larkspur", "Oakhurst",
        "Pebblebrook", "Ravenscar", "Saltmarsh", "Tidewell", "Umberfield", "Vexley",
        "Willowmere", "Yarrowdale", "Zephyrton", "Coldharbour", "Emberly", "Foxbury"]
HOBBY = ["carving driftwood", "pressing ferns", "polishing seashells", "knitting tapestries",
         "restoring sundials", "fermenting cider", "collecting fossils", "whittling flutes",
         "brewing elderflower wine", "mending fishnets", "painting porcelain", "sketching gargoyles",
         "juggling pinecones", "gilding picture frames", "tending bonsai", "weaving baskets",
         "polishing pewter", "binding herbariums", "stargazing with a sextant", "tuning harpsichords",
         "embroidering quilts", "smoking kippers", "charting comets", "shearing alpacas"]
PET = ["tortoise", "ferret", "parrot", "hedgehog", "iguana", "tarantula", "goose", "donkey",
       "salamander", "canary", "badger", "lizard", "peacock", "otter", "raven", "chinchilla",
       "cockatoo", "weasel", "gecko", "marmot", "toad", "heron", "magpie", "mongoose"]
PETNAME = ["Biscuit", "Pumpernickel", "Marzipan", "Crumpet", "Nutmeg", "Brisket", "Truffle", "Gherkin",
           "Waffle", "Dumpling", "Fennel", "Parsnip", "Turnip", "Pickle", "Saffron", "Mustard",
           "Juniper", "Clove", "Sorrel", "Quince", "Radish", "Thyme", "Barley", "Chutney"]
OBJECT = ["brass telescope", "silver thimble", "pewter tankard", "ivory chess set", "copper kettle",
          "velvet cloak", "mahogany compass", "tin whistle", "leather satchel", "jade brooch",
          "oak walking stick", "glass paperweight", "bone harmonica", "wooden abacus", "iron lantern",
          "woollen shawl", "enamel locket", "crystal decanter", "bronze sundial", "painted fan",
          "marble inkwell", "horn snuffbox", "clay ocarina", "linen parasol"]
FEAR = ["thunderstorms", "moths", "eels", "bridges", "pigeons", "cellars", "icicles", "scarecrows",
        "jellyfish", "wasps", "mirrors", "ladders", "crows", "tunnels", "puppets", "candles",
        "wolves", "hailstones", "beetles", "chimneys", "ghosts", "whirlpools", "spiders", "owls"]
RELATIVE = ["grandmother", "uncle", "aunt", "grandfather", "godmother", "cousin"]
SKILL = ["to play the accordion", "to tie sailor knots", "to read tea leaves", "to bake sourdough",
         "to forge horseshoes", "to swim in icy lochs", "to whistle birdsong", "to carve spoons",
         "to tan hides", "to brew mead", "to darn socks", "to pick locks",
         "to ride a unicycle", "to fold origami cranes", "to skin rabbits", "to row a coracle",
         "to pluck geese", "to churn butter", "to shoe horses", "to mend clocks",
         "to plait rushes", "to cure hams", "to sharpen scythes", "to paddle a canoe"]

# Six themes; each work favours three of them.
THEMES = {
    "sea": ["sea", "boats", "tide"],
    "music": ["music", "songs", "concert"],
    "food": ["bread", "soup", "supper"],
    "garden": ["garden", "flowers", "seeds"],
    "money": ["money", "debts", "wages"],
    "war": ["war", "soldiers", "battle"],
}
WORK_THEMES = {
    "harbour-tales": ["sea", "food", "money"],
    "night-orchestra": ["music", "money", "garden"],
    "market-street": ["food", "money", "garden"],
    "frontier-garrison": ["war", "food", "sea"],
}
THEME_LINES = [
    "The {0} and the {1} are all anyone talks about lately.",
    "I keep thinking about the {1}, and the {0} as well.",
    "Nobody understands the {0} like we do, nor the {1}.",
    "Without the {1} there would be no {0} worth mentioning.",
]

PERSONAS = [
    "A retired ferry captain who collects antique maps.",
    "A night nurse who writes crossword puzzles on the side.",
    "A beekeeper who sells honey at the farmers market.",
    "A teenage chess prodigy who hates losing at cards.",
    "A baker who wakes up at three every morning.",
    "A museum guard who knows every painting by heart.",
    "A marathon runner recovering from a knee injury.",
    "A florist who grows rare orchids in a greenhouse.",
    "A school librarian who organises poetry readings.",
    "A bus driver who memorises the life stories of passengers.",
    "A violin teacher who repairs instruments in a tiny workshop.",
    "A mountain guide who photographs wild goats.",
    "A carpenter who builds birdhouses for the neighbours.",
    "A retired astronomer who still watches meteor showers.",
    "A street musician who plays the accordion near the station.",
    "A pastry chef obsessed with lemon tarts.",
    "A lifeguard who spends the winter knitting scarves.",
    "A taxi driver who listens to opera all night.",
    "A botanist who catalogues mosses in the forest.",
    "A potter who sells bowls at village fairs.",
    "A journalist who covers local elections.",
    "A zookeeper who looks after the penguins.",
    "A fisherman who tells tall tales at the harbour.",
    "A translator who speaks seven languages.",
    "A gardener who breeds giant pumpkins.",
    "A locksmith who solves puzzles for fun.",
    "A mail carrier who knows every dog on the route.",
    "A tailor who sews costumes for the local theatre.",
    "A historian who restores old castles.",
    "A cyclist who rides across the country every summer.",
]


def load_zipf():
    table = {}
    for line in (ROOT / "data" / "zipf_en.tsv").read_text().splitlines():
        if line.startswith("#") or not line.strip():
            continue
        word, value = line.split("\t")
        table[word] = float(value)
    return table


def main():
    rng = random.Random(20240501)
    zipf = load_zipf()

    pools = [OCCUPATION, TOWN, HOBBY, PET, PETNAME, OBJECT, FEAR, SKILL]
    for pool in pools:
        assert len(pool) >= 24 and len(set(pool)) == len(pool)
        rng.shuffle(pool)

    profiles, traits = [], {}
    n = 0
    for work, names in WORKS.items():
        for name in names:
            occ, town, hobby, pet, petname, obj, fear, skill = (p[n] for p in pools)
            rare = [w for w in re.findall(r"[a-z]+", f"{occ} {hobby} {pet} {obj}".lower())
                    if zipf.get(w, 0.0) < 4.0]
            assert rare, f"{name} has no rare words"
            relative = RELATIVE[n % len(RELATIVE)]
            pid = f"{work.split('-')[0][:4]}-{name.lower()}"
            profiles.append({
                "profile_id": pid,
                "name": name,
                "gender": GENDER[n % 2],
                "mbti": MBTI[n % len(MBTI)],
                "biography": [
                    f"I am a {occ} from {town}.",
                    f"I spend my evenings {hobby}.",
                    f"I keep a {pet} called {petname}.",
                    f"My most treasured possession is a {obj}.",
                    f"I am terrified of {fear}.",
                    f"My {relative} taught me {skill}.",
                ],
                "origin": "corpus",
                "source_work": work,
            })
            traits[pid] = {"name": name, "occ": occ, "town": town, "hobby": hobby, "pet": pet,
                           "petname": petname, "obj": obj, "fear": fear}
            n += 1

    def about(other, k):
        t = traits[other]
        lines = [
            f"You are the {t['occ']} from {t['town']}, after all.",
            f"How is your {t['pet']} {t['petname']} these days?",
            f"I saw you {t['hobby']} again, {t['name']}.",
            f"Do you still carry that {t['obj']}?",
            f"Are you still scared of {t['fear']}?",
        ]
        return lines[k % len(lines)]

    dialogues = []
    by_work = {}
    for p in profiles:
        by_work.setdefault(p["source_work"], []).append(p["profile_id"])
    for work, ids in by_work.items():
        for a, b in combinations(ids, 2):
            for rep in range(2):
                theme = rng.choice(WORK_THEMES[work])
                words = THEMES[theme]
                first, second = (a, b) if rep == 0 else (b, a)
                turns = []
                for i in range(6):
                    speaker, other = (first, second) if i % 2 == 0 else (second, first)
                    w0, w1 = words[i % 3], words[(i + 1) % 3]
                    line = THEME_LINES[(i + rep) % len(THEME_LINES)].format(w0, w1)
                    turns.append({"speaker_ref": speaker, "text": f"{line} {about(other, i // 2 + rep)}"})
                dialogues.append({
                    "dialogue_id": f"{first}--{second}",
                    "speaker_a": first,
                    "speaker_b": second,
                    "turns": turns,
                    "topic": None,
                    "source": "gold",
                })

    OUT.mkdir(parents=True, exist_ok=True)
    with open(OUT / "profiles.jsonl", "w") as f:
        for p in profiles:
            f.write(json.dumps(p) + "\n")
    with open(OUT / "dialogues.jsonl", "w") as f:
        for d in dialogues:
            f.write(json.dumps(d) + "\n")
    (OUT / "personas.txt").write_text("\n".join(PERSONAS) + "\n")
    print(f"{len(profiles)} profiles, {len(dialogues)} dialogues, {len(PERSONAS)} personas")


if __name__ == "__main__":
    main()
