#!/usr/bin/env python3
"""Generate the bundled training corpus: simple seeded children's stories.

The text is original, generated from templates below, and placed in the
public domain. Regenerating with the same seed reproduces corpus.txt
byte-for-byte:

    python data/make_corpus.py --seed 7 --min-bytes 1600000 --out data/corpus.txt
"""
import argparse
import random

NAMES = [
    "Tom", "Lily", "Ben", "Mia", "Sam", "Anna", "Max", "Ruby", "Leo", "Ella",
    "Noah", "Grace", "Finn", "Daisy", "Jack", "Rosa", "Owen", "Ivy", "Luke", "Nina",
    "Pete", "Wendy", "Carl", "Tess", "Hugo", "June", "Alfie", "Maren", "Theo", "Sofia",
    "Billy", "Clara", "Dan", "Edith", "Felix", "Hanna", "Igor", "Jenny", "Kit", "Lola",
]
ANIMALS = [
    "dog", "cat", "bird", "rabbit", "fox", "bear", "mouse", "frog", "duck", "owl",
    "pony", "squirrel", "turtle", "hedgehog", "lamb", "goat", "crow", "otter", "mole", "bee",
    "puppy", "kitten", "fish", "snail", "badger", "deer", "wolf", "raven", "toad", "crab",
]
OBJECTS = [
    "ball", "kite", "book", "hat", "boat", "drum", "spoon", "ribbon", "lantern", "basket",
    "wagon", "whistle", "blanket", "button", "feather", "pebble", "crayon", "ladder", "mirror", "bridge",
    "candle", "bucket", "shell", "marble", "rope", "flute", "map", "coin", "bell", "broom",
    "sled", "umbrella", "puzzle", "teapot", "pillow", "banner", "compass", "jar", "net", "flag",
]
PLACES = [
    "garden", "forest", "meadow", "kitchen", "harbour", "village", "orchard", "attic", "valley", "market",
    "riverbank", "treehouse", "library", "barn", "lighthouse", "pond", "hill", "cave", "workshop", "field",
    "courtyard", "shore", "mill", "castle", "greenhouse", "playground", "cellar", "tower", "lane", "bakery",
]
ADJECTIVES = [
    "happy", "small", "brave", "quiet", "shiny", "red", "blue", "green", "golden", "soft",
    "clever", "sleepy", "bright", "gentle", "curious", "tiny", "warm", "cold", "old", "young",
    "proud", "silly", "kind", "swift", "heavy", "light", "striped", "round", "smooth", "noisy",
    "purple", "silver", "wooden", "hungry", "merry", "patient", "dusty", "fresh", "crooked", "secret",
]
VERBS_PAST = [
    "found", "carried", "painted", "followed", "watched", "chased", "borrowed", "mended", "counted", "hid",
    "lifted", "dropped", "opened", "closed", "shared", "traded", "polished", "gathered", "planted", "washed",
    "stacked", "wrapped", "tossed", "caught", "measured", "balanced", "dragged", "pushed", "pulled", "spotted",
]
VERBS_ING = [
    "running", "singing", "jumping", "drawing", "digging", "sailing", "hopping", "baking", "climbing", "dancing",
    "whistling", "fishing", "skating", "marching", "sweeping", "knitting", "juggling", "rowing", "humming", "sliding",
]
WEATHER = [
    "sunny", "rainy", "windy", "snowy", "foggy", "cloudy", "stormy", "frosty", "misty", "breezy",
]
FEELINGS = [
    "glad", "surprised", "sleepy", "excited", "thankful", "puzzled", "cheerful", "calm", "dizzy", "hopeful",
]
TIMES = [
    "One morning", "One evening", "On a {w} day", "Late one afternoon", "Just after breakfast",
    "Before bedtime", "At the first light of day", "When the moon came up", "After the rain stopped",
    "While the kettle sang",
]
OPENERS = [
    "{t}, {n} went to the {p}.",
    "{t}, {n} and {n2} walked down to the {p}.",
    "{t}, a {a} {z} lived near the {p}.",
    "{t}, {n} heard a {a} sound in the {p}.",
    "Once upon a time, {n} kept a {a} {o} in the {p}.",
    "Once there was a {a} {z} who loved the {p}.",
]
MIDDLES = [
    "{n} {v} a {a} {o} under the {a2} tree.",
    "The {z} {v} the {o} and felt {f}.",
    "{n} saw the {z} {g} beside the {o}.",
    "A {a} {z} came to the {p} to look at the {o}.",
    "{n} asked {n2} to help with the {a} {o}.",
    "Together they {v} the {o} all the way to the {p}.",
    "The {a} {o} was too {a2} for the little {z}.",
    "{n} tried {g} but the {z} kept {g2}.",
    "It was a {w} day, so they stayed near the {p}.",
    "{n2} whispered that the {o} belonged to the {a} {z}.",
    "The {z} hid the {o} behind the {a} door of the {p}.",
    "{n} counted ten {a} pebbles and one {a2} {o}.",
    "Soon the {z} felt {f} and sat by the {o}.",
    "But the {o} rolled away toward the {p}.",
    "{n} laughed, because the {z} looked so {a}.",
    "Then {n2} {v} the {a} {o} with great care.",
    "Nobody knew why the {o} was so {a}.",
    "The wind carried the {o} over the {p}.",
    "{n} put the {o} into the {a} basket and waited.",
    "At the {p}, everyone was {g} and {g2}.",
]
ENDINGS = [
    "At last, {n} brought the {o} home, feeling {f}.",
    "That night, the {z} slept beside the {a} {o}.",
    "From that day on, {n} and the {z} were friends.",
    "Everyone agreed it was the most {a} day in the {p}.",
    "{n} thanked {n2}, and they shared the {o}.",
    "And so the {a} {z} stayed in the {p} forever.",
    "When the stars came out, {n} felt {f} and went to sleep.",
    "The end of the story made {n2} feel {f}.",
]


def build_sentence(rng: random.Random, template: str) -> str:
    n = rng.choice(NAMES)
    n2 = rng.choice([x for x in NAMES if x != n])
    fills = {
        "t": rng.choice(TIMES).replace("{w}", rng.choice(WEATHER)),
        "n": n,
        "n2": n2,
        "z": rng.choice(ANIMALS),
        "o": rng.choice(OBJECTS),
        "p": rng.choice(PLACES),
        "a": rng.choice(ADJECTIVES),
        "a2": rng.choice(ADJECTIVES),
        "v": rng.choice(VERBS_PAST),
        "g": rng.choice(VERBS_ING),
        "g2": rng.choice(VERBS_ING),
        "w": rng.choice(WEATHER),
        "f": rng.choice(FEELINGS),
    }
    out = template
    for key, val in fills.items():
        out = out.replace("{" + key + "}", val)
    return out


def build_story(rng: random.Random) -> str:
    sentences = [build_sentence(rng, rng.choice(OPENERS))]
    for _ in range(rng.randint(3, 7)):
        sentences.append(build_sentence(rng, rng.choice(MIDDLES)))
    sentences.append(build_sentence(rng, rng.choice(ENDINGS)))
    return " ".join(sentences)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--min-bytes", type=int, default=1_600_000)
    ap.add_argument("--out", default="data/corpus.txt")
    args = ap.parse_args()

    rng = random.Random(args.seed)
    chunks, size = [], 0
    while size < args.min_bytes:
        story = build_story(rng) + "\n\n"
        chunks.append(story)
        size += len(story.encode())
    with open(args.out, "w", encoding="ascii") as f:
        f.write("".join(chunks))
    print(f"wrote {size} bytes to {args.out}")


if __name__ == "__main__":
    main()
