#!/usr/bin/env python3
"""Regenerates the CoNLL fixture corpora under fixtures/.

Documents are described as (key, part, sentences, clusters) where sentences
are (speaker, "w w w") pairs and clusters are lists of global 1-based
inclusive (start, end) word spans. Cluster ids are written as given, so a
deliberately shuffled id assignment stays shuffled in the file.
"""

import os

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "..", "fixtures")


def render(docs):
    lines = []
    for key, part, sentences, clusters in docs:
        lines.append(f"#begin document ({key}); part {part:03d}")
        # span -> list of cluster ids is not needed; disjointness is assumed.
        opens = {}
        closes = {}
        singles = {}
        for cid, cluster in clusters:
            for (a, b) in cluster:
                if a == b:
                    singles.setdefault(a, []).append((cid, b - a + 1))
                else:
                    opens.setdefault(a, []).append((cid, b - a + 1))
                    closes.setdefault(b, []).append((cid, b - a + 1))
        pos = 0
        for speaker, text in sentences:
            words = text.split()
            for local, word in enumerate(words):
                pos += 1
                cell = []
                for cid, _ in sorted(opens.get(pos, []), key=lambda x: -x[1]):
                    cell.append(f"({cid}")
                for cid, _ in singles.get(pos, []):
                    cell.append(f"({cid})")
                for cid, _ in sorted(closes.get(pos, []), key=lambda x: x[1]):
                    cell.append(f"{cid})")
                coref = "|".join(cell) if cell else "-"
                row = [key, str(part), str(local), word,
                       "-", "-", "-", "-", "-", speaker, "-", coref]
                lines.append("\t".join(row))
            lines.append("")
        lines.append("#end document")
    return "\n".join(lines) + "\n"


DIALOGUE = [
    (
        "dialogue", 0,
        [
            ("Speaker-A", "I still have n't gone to that fresh French restaurant by your house"),
            ("Speaker-A", "I 'm like dying to go there"),
            ("Speaker-B", "You mean the one right next to the apartment"),
            ("Speaker-B", "yeah yeah yeah"),
        ],
        [
            (0, [(1, 1), (14, 14), (21, 21)]),
            (1, [(12, 13), (28, 29)]),
            (2, [(7, 13), (23, 29)]),
        ],
    ),
]

MINI = [
    ("mini/solo", 0,
     [("Ann", "the cat saw the cat today")],
     [(0, [(1, 2), (4, 5)])]),

    ("mini/pronouns", 0,
     [("Alice", "Anna met Omar yesterday"),
      ("Alice", "she greeted him warmly"),
      ("Bob", "later she left")],
     [(0, [(1, 1), (5, 5)]),
      (1, [(3, 3), (7, 7)]),
      (2, [(10, 10)])]),

    ("mini/nested", 0,
     [("Ann", "the king of spain arrived"),
      ("Ann", "he thanked spain kindly")],
     [(0, [(1, 4), (6, 6)]),
      (1, [(4, 4), (8, 8)])]),

    ("emptydoc", 0,
     [("X", "nothing happens here"),
      ("Y", "still nothing happens")],
     []),

    ("mini/singleton", 0,
     [("Ann", "the old tower stood alone")],
     [(0, [(1, 3)]),
      (1, [(5, 5)])]),

    ("mini/mixed", 0,
     [("Ada", "Maria owns a boat"),
      ("Ben", "Maria sails it often")],
     [(0, [(1, 1), (5, 5)]),
      (1, [(3, 4), (7, 7)]),
      (2, [(8, 8)])]),

    ("mini/chain2", 0,
     [("Nia", "Leo writes code"),
      ("Nia", "Leo debugs code"),
      ("Nia", "Leo ships code"),
      ("Nia", "then Leo rests")],
     [(0, [(1, 1), (4, 4)]),
      (1, [(3, 3), (6, 6)]),
      (2, [(7, 7), (11, 11)])]),

    ("mini/dialog", 0,
     [("Ana", "I bought apples"),
      ("Ben", "I like apples")],
     [(0, [(3, 3), (6, 6)])]),

    ("mini/dialog", 1,
     [("Ben", "my code works")],
     [(0, [(1, 1)])]),

    ("mini/shared_end", 0,
     [("Ann", "the red fox jumped"),
      ("Ann", "the fox saw the red fox sleep")],
     [(0, [(1, 3), (8, 10)]),
      (1, [(2, 3), (9, 10)])]),

    ("mini/tom", 0,
     [("Ann", "Tom and Jerry met Tom at noon"),
      ("Ann", "Tom smiled")],
     [(0, [(1, 1), (5, 5)]),
      (1, [(3, 3)]),
      (2, [(8, 8)])]),

    ("determiners", 0,
     [("Sam", "it rained all day"),
      ("Sam", "it froze at night")],
     [(0, [(1, 1)]),
      (1, [(5, 5)])]),

    ("mini/quote", 0,
     [("Ann", "Sara 's dog barked"),
      ("Ann", "it barked again")],
     [(0, [(1, 3), (5, 5)]),
      (1, [(1, 1)])]),

    ("alpha", 0,
     [("P", "Ira saw Noa"),
      ("Q", "Noa waved at Ira")],
     [(0, [(1, 1), (7, 7)]),
      (1, [(3, 3), (4, 4)])]),

    ("mini/three_speakers", 0,
     [("A", "we should order pizza"),
      ("B", "we could share one"),
      ("C", "you two always agree")],
     [(0, [(1, 1), (5, 5)]),
      (1, [(4, 4), (8, 8)]),
      (2, [(9, 10)])]),

    ("mini/adjacent", 0,
     [("Dee", "old Ben and young Ben talked"),
      ("Dee", "old Ben laughed")],
     [(0, [(1, 2), (7, 8)]),
      (1, [(4, 5)])]),

    ("mini/unicode", 0,
     [("José", "José aime Zoë"),
      ("José", "elle sourit à José")],
     [(0, [(1, 1), (7, 7)]),
      (1, [(3, 3), (4, 4)])]),

    ("mini/numbers", 0,
     [("N", "revenue hit 5 million in 2020"),
      ("N", "2020 was hard")],
     [(0, [(6, 6), (7, 7)]),
      (1, [(3, 4)])]),

    ("mini/longdoc", 0,
     [("H", "the ship sailed north"),
      ("H", "storms hit the ship hard"),
      ("H", "the crew worried"),
      ("H", "it creaked loudly"),
      ("H", "the crew prayed"),
      ("H", "finally it docked")],
     [(0, [(1, 2), (7, 8)]),
      (1, [(10, 11), (16, 17)]),
      (2, [(13, 13), (20, 20)])]),

    ("sv/radio/01", 0,
     [("talare#1", "huset är rött"),
      ("talare#2", "det lyser")],
     [(0, [(1, 1), (4, 4)])]),

    ("mini/nospeaker", 0,
     [("-", "snow fell quietly"),
      ("-", "children cheered")],
     [(0, [(1, 1)])]),

    ("mini/big_sentence", 0,
     [("Z", "Ada told Eve that Ada would help Eve soon")],
     [(0, [(1, 1), (5, 5)]),
      (1, [(3, 3), (8, 8)])]),

    ("mini/tail", 0,
     [("W", "birds fly south"),
      ("W", "people watch birds")],
     [(0, [(1, 1), (6, 6)])]),

    # Ids deliberately sparse and out of first-mention order; the reader
    # densifies and reorders.
    ("mini/swapids", 0,
     [("P", "Uma saw Rex"),
      ("Q", "Rex waved at Uma")],
     [(7, [(1, 1), (7, 7)]),
      (2, [(3, 3), (4, 4)])]),

    ("bn/talk/01", 0,
     [("Host", "welcome back friends"),
      ("Host", "friends clapped")],
     [(0, [(3, 3), (4, 4)])]),
]

CHAINS = [
    ("chains/pronouns", 0,
     [("Alice", "Anna met Omar yesterday"),
      ("Alice", "she greeted him warmly"),
      ("Bob", "later she left")],
     [(0, [(1, 1), (5, 5), (10, 10)]),
      (1, [(3, 3), (7, 7)])]),

    ("chains/leo", 0,
     [("Nia", "Leo writes code"),
      ("Nia", "Leo debugs code"),
      ("Nia", "Leo ships code"),
      ("Nia", "then Leo rests")],
     [(0, [(1, 1), (4, 4), (7, 7), (11, 11)])]),

    ("chains/tom", 0,
     [("Ann", "Tom and Jerry met Tom at noon"),
      ("Ann", "Tom smiled")],
     [(0, [(1, 1), (5, 5), (8, 8)]),
      (1, [(3, 3)])]),

    ("chains/we", 0,
     [("A", "we should order pizza"),
      ("B", "we could share one"),
      ("C", "you two always agree")],
     [(0, [(1, 1), (5, 5), (9, 10)]),
      (1, [(4, 4), (8, 8)])]),

    ("chains/ship", 0,
     [("H", "the ship sailed north"),
      ("H", "storms hit the ship hard"),
      ("H", "the crew worried"),
      ("H", "it creaked loudly"),
      ("H", "the crew prayed"),
      ("H", "finally it docked")],
     [(0, [(1, 2), (7, 8), (13, 13), (20, 20)]),
      (1, [(10, 11), (16, 17)])]),
]

SINGLETON_GOLD = [
    ("synth/modes", 0,
     [("S", "alice met bob near carl and dave")],
     [(0, [(1, 1), (3, 3)]),
      (1, [(5, 5)])]),
]

SINGLETON_PRED = [
    ("synth/modes", 0,
     [("S", "alice met bob near carl and dave")],
     [(0, [(1, 1), (3, 3)]),
      (1, [(7, 7)])]),
]


def main():
    os.makedirs(OUT, exist_ok=True)
    for name, docs in [
        ("dialogue.conll", DIALOGUE),
        ("mini.conll", MINI),
        ("chains.conll", CHAINS),
        ("singleton_gold.conll", SINGLETON_GOLD),
        ("singleton_pred.conll", SINGLETON_PRED),
    ]:
        path = os.path.join(OUT, name)
        with open(path, "w", encoding="utf-8") as f:
            f.write(render(docs))
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
