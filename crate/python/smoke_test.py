"""Smoke test for the stpipe Python module.

Build and install first:  pip install --no-build-isolation -e crates/python
Then run:                 python python/smoke_test.py
"""

import stpipe


def main():
    assert stpipe.number_to_words("42") == ["forty", "two"]
    assert stpipe.normalize("I have 2 cats.") == "i have two cats"
    assert stpipe.is_spoken_form(["two", "cats"])

    assert stpipe.corrupt("two percent", homophones={"two": ["to"]}, homophone_rate=1.0) == "to percent"
    assert stpipe.corrupt("a b c", seed=3) == "a b c"

    signal = stpipe.AudioSignal([0.0] * 8000 + [0.5, -0.5] * 4000, 16000)
    back = stpipe.AudioSignal.from_wav(signal.to_wav())
    assert len(back) == 16000 and back.sample_rate_hz == 16000
    assert len(signal.speed_perturb(0.8)) == 20000
    noisy = signal.add_noise(20.0, seed=1)
    assert len(noisy) == len(signal)
    assert signal.energy_vad(10.0, 1e-3, 30) == [(0.5, 1.0)]
    groups = stpipe.splice_min_duration([(0, 4), (4.5, 7.5), (8, 13), (14, 26)], 10.0)
    assert [len(g) for g in groups] == [3, 1]

    pairs = [("das haus", "the house"), ("das buch", "the book"), ("ein buch", "a book")]
    lex, ll = stpipe.LexiconModel.train(pairs, iterations=5)
    assert all(b >= a - 1e-9 for a, b in zip(ll, ll[1:]))
    rev, _ = stpipe.LexiconModel.train(pairs, iterations=5, reverse=True)
    assert lex.similarity("das haus", "the house", rev) > lex.similarity("das haus", "a book", rev)
    assert stpipe.LexiconModel.parse(lex.to_text()).to_text() == lex.to_text()
    assert stpipe.filter_bitext(pairs + pairs[:1], dedup=True) == pairs

    paragraphs = ["red cat stop. big dog runs stop. small home stop."] * 10
    model, losses = stpipe.BoundaryModel.train(paragraphs, window=1, epochs=5, lr=0.5)
    assert len(losses) == 5
    segments = model.segment("red cat stop big dog stop".split(), 1, 10)
    assert sum(segments, []) == "red cat stop big dog stop".split()

    assert stpipe.edit_distance("a b c d".split(), "a x c".split())[0] == 2
    refs = [["the", "cat", "sat", "down"], ["on", "the", "red", "mat"]]
    report = stpipe.score_speech_translation([["the", "cat", "sat", "down", "on"], ["the", "red", "mat"]], refs)
    assert report.bleu == 100.0 and report.boundaries == [4]
    assert str(report).startswith("bleu\t100.0000")
    clipped = stpipe.bleu([["the", "cat"]], [["the", "the", "the"]])
    assert abs(clipped.precisions[0] - 1 / 3) < 1e-12

    assert abs(stpipe.length_penalty(7, 0.6) - 2 ** 0.6) < 1e-9
    sys1 = "0 ||| a b c d ||| tm=-1 lm=-2\n0 ||| a c c d ||| tm=-2 lm=-1\n"
    sys2 = "0 ||| a c c d ||| tm=-1.5 lm=-1\n"
    merged = stpipe.merge_nbest([sys1, sys2])
    # the later system's tm score replaces the earlier one
    assert "a c c d ||| lm=-1 tm=-1.5" in merged
    best = stpipe.rescore(merged, {"tm": 1.0}).splitlines()[0]
    assert best.split(" ||| ")[1] == "a b c d"
    grid = [("lm", [0.0, 1.0]), ("tm", [0.0, 1.0])]
    weights, alpha, score = stpipe.tune_weights(merged, [["a", "c", "c", "d"]], grid, [0.0])
    assert weights == {"lm": 1.0, "tm": 0.0} and alpha == 0.0 and score == 100.0

    try:
        stpipe.number_to_words("12x")
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError")

    print("stpipe smoke test: ok")


if __name__ == "__main__":
    main()
