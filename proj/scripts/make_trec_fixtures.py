#!/usr/bin/env python3
"""Generate frozen MAP/MRR fixtures for the ranking-evaluation tests.

Emits, under tests/fixtures/trec/:
  case_NN.tsv   -- qid docid score label, grouped by qid (test input)
  case_NN.run   -- the expected 6-column run file for that case
  expected.tsv  -- case name, MAP, MRR

Reference metrics come from pytrec_eval (the official trec_eval sources)
when it is installed; otherwise from the reference implementation below,
which follows trec_eval's documented semantics: candidates ranked by
descending score, AP normalized by the number of relevant documents in the
qrels, MAP/MRR averaged over topics that have at least one relevant
document. Generated scores are unique within each question, so tie-break
order cannot matter either way. Re-run with pytrec_eval available to
confirm the frozen values.
"""

import pathlib
import random

OUT_DIR = pathlib.Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "trec"
RUN_ID = "m2snet"
NUM_CASES = 10


def reference_map_mrr(questions):
    """trec_eval 'map' and 'recip_rank' over {qid: [(docid, score, label)]}."""
    ap_values = []
    rr_values = []
    for qid in sorted(questions):
        cands = questions[qid]
        num_rel = sum(label for _, _, label in cands)
        if num_rel == 0:
            continue
        # trec_eval re-sorts by descending score, breaking ties by
        # descending docid; scores are unique here so the tie-break is moot.
        ranked = sorted(cands, key=lambda c: (-c[1], c[0]))
        seen = 0
        ap = 0.0
        rr = 0.0
        for rank, (_, _, label) in enumerate(ranked, start=1):
            if label:
                seen += 1
                ap += seen / rank
                if rr == 0.0:
                    rr = 1.0 / rank
        ap_values.append(ap / num_rel)
        rr_values.append(rr)
    return sum(ap_values) / len(ap_values), sum(rr_values) / len(rr_values)


def pytrec_eval_map_mrr(questions):
    import pytrec_eval

    qrels = {
        qid: {docid: label for docid, _, label in cands}
        for qid, cands in questions.items()
    }
    run = {
        qid: {docid: score for docid, score, _ in cands}
        for qid, cands in questions.items()
    }
    evaluator = pytrec_eval.RelevanceEvaluator(qrels, {"map", "recip_rank"})
    results = evaluator.evaluate(run)
    n = len(results)
    return (
        sum(r["map"] for r in results.values()) / n,
        sum(r["recip_rank"] for r in results.values()) / n,
    )


def make_case(rng, case_index):
    questions = {}
    n_questions = rng.randint(3, 20)
    for qi in range(n_questions):
        qid = f"c{case_index:02d}q{qi:02d}"
        n_cands = rng.randint(2, 30)
        n_pos = rng.randint(1, max(1, n_cands // 3))
        labels = [1] * n_pos + [0] * (n_cands - n_pos)
        rng.shuffle(labels)
        scores = set()
        cands = []
        for ci, label in enumerate(labels):
            while True:
                score = round(rng.uniform(0.0, 1.0), 6)
                if score not in scores:  # unique scores: no tie-break ambiguity
                    scores.add(score)
                    break
            cands.append((f"{qid}_d{ci:03d}", score, label))
        questions[qid] = cands
    return questions


def main():
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    rng = random.Random(20260809)
    scorer = reference_map_mrr
    scorer_name = "reference implementation"
    try:
        import pytrec_eval  # noqa: F401

        scorer = pytrec_eval_map_mrr
        scorer_name = "pytrec_eval (official trec_eval sources)"
    except ImportError:
        pass

    expected_lines = []
    for case_index in range(NUM_CASES):
        name = f"case_{case_index:02d}"
        questions = make_case(rng, case_index)

        with open(OUT_DIR / f"{name}.tsv", "w") as tsv:
            for qid in sorted(questions):
                for docid, score, label in questions[qid]:
                    tsv.write(f"{qid}\t{docid}\t{score:.6f}\t{label}\n")

        with open(OUT_DIR / f"{name}.run", "w") as run_file:
            for qid in sorted(questions):
                ranked = sorted(questions[qid], key=lambda c: (-c[1], c[0]))
                for rank, (docid, score, _) in enumerate(ranked, start=1):
                    run_file.write(f"{qid} Q0 {docid} {rank} {score:.6f} {RUN_ID}\n")

        map_value, mrr_value = scorer(questions)
        if scorer is not reference_map_mrr:
            # cross-check the two scorers against each other when both exist
            ref_map, ref_mrr = reference_map_mrr(questions)
            assert abs(ref_map - map_value) < 1e-10, (name, ref_map, map_value)
            assert abs(ref_mrr - mrr_value) < 1e-10, (name, ref_mrr, mrr_value)
        expected_lines.append(f"{name}\t{map_value:.6f}\t{mrr_value:.6f}")

    (OUT_DIR / "expected.tsv").write_text("\n".join(expected_lines) + "\n")
    print(f"wrote {NUM_CASES} cases to {OUT_DIR} (metrics from {scorer_name})")


if __name__ == "__main__":
    main()
