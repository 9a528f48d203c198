#!/usr/bin/env python3
"""Convert raw TREC-QA answer-selection XML files to the engine's TSV format.

The raw distribution (train2393 / train / dev / test files) stores each
question as a block:

    <QApairs id='32.1'>
    <question>
    When\tdid\tAmtrak\tbegin\toperations\t?
    </question>
    <positive>
    ...one tab-separated token line...
    </positive>
    <negative>
    ...
    </negative>
    </QApairs>

The engine ingests one candidate per row instead:

    qid<TAB>label(0|1)<TAB>question text<TAB>answer text

Usage:
    convert_trecqa.py INPUT.xml OUTPUT.tsv
    convert_trecqa.py --self-test
"""

import argparse
import re
import sys

QA_OPEN = re.compile(r"<QApairs\s+id='([^']*)'>")


def block_sentence(lines):
    """First non-empty line of a block, tab-separated tokens joined by spaces."""
    for line in lines:
        stripped = line.strip("\n\r")
        if stripped.strip():
            return " ".join(tok for tok in stripped.split("\t") if tok)
    return ""


def convert(lines):
    rows = []
    qid = None
    section = None
    block = []
    question_text = ""
    pending = []  # (label, answer) seen before </QApairs>

    def close_section():
        nonlocal question_text
        if section == "question":
            question_text = block_sentence(block)
        elif section in ("positive", "negative"):
            answer = block_sentence(block)
            if answer:
                pending.append((1 if section == "positive" else 0, answer))

    for raw in lines:
        line = raw.strip("\n\r")
        open_match = QA_OPEN.match(line.strip())
        if open_match:
            qid = open_match.group(1)
            question_text = ""
            pending.clear()
            section = None
            continue
        stripped = line.strip()
        if stripped == "</QApairs>":
            close_section()
            section = None
            for label, answer in pending:
                rows.append((qid, label, question_text, answer))
            continue
        if stripped in ("<question>", "<positive>", "<negative>"):
            close_section()
            section = stripped[1:-1]
            block = []
            continue
        if stripped in ("</question>", "</positive>", "</negative>"):
            close_section()
            section = None
            continue
        if section is not None:
            block.append(line)
    return rows


def write_tsv(rows, out):
    for qid, label, question, answer in rows:
        out.write(f"{qid}\t{label}\t{question}\t{answer}\n")


SELF_TEST_INPUT = """<QApairs id='32.1'>
<question>
When\tdid\tAmtrak\tbegin\toperations\t?
</question>
<positive>
Amtrak\thas\tnot\tturned\ta\tprofit\tsince\tit\twas\tfounded\tin\t1971\t.
</positive>
<negative>
The\tweather\twas\tcold\t.
</negative>
</QApairs>
"""

SELF_TEST_EXPECTED = [
    ("32.1", 1, "When did Amtrak begin operations ?",
     "Amtrak has not turned a profit since it was founded in 1971 ."),
    ("32.1", 0, "When did Amtrak begin operations ?", "The weather was cold ."),
]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("input", nargs="?", help="raw XML file")
    parser.add_argument("output", nargs="?", help="TSV file to write")
    parser.add_argument("--self-test", action="store_true")
    args = parser.parse_args()

    if args.self_test:
        rows = convert(SELF_TEST_INPUT.splitlines(keepends=True))
        assert rows == SELF_TEST_EXPECTED, rows
        print("self-test passed")
        return

    if not args.input or not args.output:
        parser.error("INPUT and OUTPUT are required (or use --self-test)")
    with open(args.input, encoding="utf-8", errors="replace") as f:
        rows = convert(f)
    if not rows:
        sys.exit(f"no QA pairs found in {args.input}")
    with open(args.output, "w", encoding="utf-8") as out:
        write_tsv(rows, out)
    questions = len({qid for qid, _, _, _ in rows})
    positives = sum(label for _, label, _, _ in rows)
    print(f"{args.output}: {questions} questions, {len(rows)} pairs, "
          f"{100.0 * positives / len(rows):.1f}% positive")


if __name__ == "__main__":
    main()
