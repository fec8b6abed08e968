"""Regenerates the bundled CLIP vocabulary assets and the reference token ids.

Usage:
    python3 make_clip_oracle.py /path/to/open_clip

The directory must contain `tokenizer.py` and `bpe_simple_vocab_16e6.txt.gz`
from the `open_clip_torch` wheel (the OpenAI CLIP tokenizer, verbatim).
Requires `ftfy`, `regex` and `torch` (imported by `tokenizer.py`).

Outputs (relative to this file):
    ../../assets/clip_vocab.txt.gz   one "token id" record per line
    ../../assets/clip_merges.txt.gz  one "left right" pair per line, rank = line order
    clip_reference.tsv               prompt <TAB> 77 comma-separated ids
"""

import gzip
import os
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
ASSETS = os.path.join(HERE, "..", "..", "assets")

CATALOG = [
    ("bunny", ["pixar character", "octane render", "highly detailed"]),
    ("kitten", ["studio ghibli", "soft lighting", "watercolor painting"]),
    ("puppy", ["disney style", "trending on artstation", "digital art"]),
    ("panda", ["unreal engine", "cinematic lighting", "concept art"]),
    ("fox", ["fantasy art", "dramatic lighting", "oil painting"]),
    ("owl", ["storybook illustration", "pastel colors", "intricate details"]),
    ("hedgehog", ["claymation", "miniature", "tilt shift photography"]),
    ("penguin", ["low poly", "isometric view", "vibrant colors"]),
    ("koala", ["anime style", "makoto shinkai", "beautiful sky"]),
    ("otter", ["photorealistic", "golden hour", "bokeh"]),
    ("duckling", ["children book illustration", "gouache", "warm palette"]),
    ("lamb", ["pixel art", "retro game", "cozy atmosphere"]),
    ("red panda", ["cyberpunk", "neon lights", "volumetric fog"]),
]

CORPUS = [
    "",
    "a",
    "hello world",
    "Hello   World",
    "  leading and trailing spaces  ",
    "a photo of a cat",
    "A PHOTO OF A DOG",
    "an astronaut riding a horse on mars",
    "the quick brown fox jumps over the lazy dog",
    "it's a beautiful day",
    "they're here, we've seen them, I'm sure, you'll see, he'd know",
    "don't stop believing",
    "rock'n'roll",
    "1984",
    "room 101, floor 7",
    "4k uhd 8k resolution",
    "version 2.0.1",
    "pi is 3.14159",
    "100% cotton",
    "price: $19.99!",
    "email@example.com",
    "https://example.com/path?q=1",
    "c++ and c# programming",
    "snake_case_identifier",
    "camelCaseIdentifier",
    "hyphenated-word-chain",
    "multiple!!! exclamation??? marks...",
    "(parentheses) [brackets] {braces}",
    "quote \"double\" and 'single'",
    "tab\tseparated\tvalues",
    "new\nline\nseparated",
    "café au lait",
    "naïve résumé",
    "über straße",
    "señor niño",
    "crème brûlée",
    "Ångström",
    "日本語のテキスト",
    "中文字符",
    "한국어 텍스트",
    "русский текст",
    "ελληνικά γράμματα",
    "עברית",
    "العربية",
    "emoji 🐰 bunny",
    "🔥🔥🔥",
    "cat 🐱 and dog 🐶",
    "a cute and adorable bunny",
    "a cute and adorable bunny, pixar character",
    "masterpiece, best quality, ultra detailed",
    "portrait of a woman, oil on canvas, by rembrandt",
    "landscape with mountains and a lake at sunset",
    "cyberpunk city at night, neon lights, rain, blade runner",
    "a bowl of fruit, still life, cezanne",
    "steampunk airship over victorian london",
    "isometric pixel art of a small village",
    "macro photograph of a dewdrop on a leaf",
    "low poly render of a fox",
    "watercolor painting of a lighthouse",
    "an ancient library filled with glowing books",
    "a robot playing chess in a park",
    "underwater coral reef teeming with fish",
    "a dragon made of clouds",
    "minimalist logo of a mountain",
    "vintage travel poster for the moon",
    "a cozy cabin in a snowy forest",
    "antidisestablishmentarianism",
    "supercalifragilisticexpialidocious",
    "pneumonoultramicroscopicsilicovolcanoconiosis",
    "aaaaaaaaaaaaaaaaaaaaaaaa",
    "abababababababab",
    "q",
    "the the the the the",
    "a, b, c, d, e, f, g",
    "one two three four five six seven eight nine ten eleven twelve thirteen fourteen fifteen sixteen seventeen eighteen nineteen twenty twentyone twentytwo twentythree twentyfour twentyfive twentysix twentyseven twentyeight twentynine thirty thirtyone thirtytwo thirtythree thirtyfour thirtyfive thirtysix thirtyseven thirtyeight thirtynine forty fortyone fortytwo fortythree fortyfour fortyfive fortysix fortyseven fortyeight fortynine fifty fiftyone fiftytwo fiftythree fiftyfour fiftyfive fiftysix fiftyseven fiftyeight fiftynine sixty sixtyone sixtytwo sixtythree sixtyfour sixtyfive sixtysix sixtyseven sixtyeight sixtynine seventy seventyone seventytwo seventythree seventyfour seventyfive",
    "1 2 3 4 5 6 7 8 9 10 11 12 13 14 15 16 17 18 19 20 21 22 23 24 25 26 27 28 29 30 31 32 33 34 35 36 37 38 39 40",
    "trending on artstation",
    "unreal engine 5",
    "octane render, 8k",
    "studio ghibli style",
    "by greg rutkowski and alphonse mucha",
    "highly detailed, sharp focus, digital painting",
    "f/1.8 50mm lens",
    "ISO 100, 1/250s",
    "sci-fi",
    "x-ray",
    "t-shirt design",
    "mother's day card",
    "children's book illustration",
    "it's",
    "'s",
    "'quoted'",
    "@user #hashtag",
    "a/b/c",
    "~tilde~",
    "semi;colon: separated",
    "back\\slash",
    "under_score and-dash",
    "MiXeD CaSe WoRdS",
    "end.",
]


def catalog_texts():
    return [f"a cute and adorable {s}, {', '.join(k)}" for s, k in CATALOG]


def main():
    sys.path.insert(0, sys.argv[1])
    import tokenizer as clip_tok  # noqa: E402

    bpe_path = os.path.join(sys.argv[1], "bpe_simple_vocab_16e6.txt.gz")
    lines = gzip.open(bpe_path).read().decode("utf-8").split("\n")
    merges = lines[1 : 49152 - 256 - 2 + 1]
    byte_chars = list(clip_tok.bytes_to_unicode().values())
    vocab = byte_chars + [c + "</w>" for c in byte_chars]
    vocab += ["".join(m.split()) for m in merges]
    vocab += ["<|startoftext|>", "<|endoftext|>"]
    assert len(vocab) == 49408

    os.makedirs(ASSETS, exist_ok=True)
    with gzip.GzipFile(os.path.join(ASSETS, "clip_vocab.txt.gz"), "wb", mtime=0) as f:
        f.write("".join(f"{t} {i}\n" for i, t in enumerate(vocab)).encode("utf-8"))
    with gzip.GzipFile(os.path.join(ASSETS, "clip_merges.txt.gz"), "wb", mtime=0) as f:
        f.write("".join(m + "\n" for m in merges).encode("utf-8"))

    tok = clip_tok.SimpleTokenizer()
    sot, eot = 49406, 49407
    rows = []
    for text in catalog_texts() + CORPUS:
        content = tok.encode(text)[:75]
        ids = [sot] + content + [eot]
        ids += [eot] * (77 - len(ids))
        escaped = text.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")
        rows.append(escaped + "\t" + ",".join(map(str, ids)))
    assert len(rows) == 113
    with open(os.path.join(HERE, "clip_reference.tsv"), "w", encoding="utf-8") as f:
        f.write("\n".join(rows) + "\n")


if __name__ == "__main__":
    main()
