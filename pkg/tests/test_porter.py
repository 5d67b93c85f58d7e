"""Stemmer checks against a frozen golden list and rule-level edge cases."""

from tablerank.porter import stem

# input/output pairs covering every rewrite step, frozen as goldens
GOLDEN = [
    ("caresses", "caress"),
    ("ponies", "poni"),
    ("ties", "ti"),
    ("caress", "caress"),
    ("cats", "cat"),
    ("feed", "feed"),
    ("agreed", "agre"),
    ("plastered", "plaster"),
    ("bled", "bled"),
    ("motoring", "motor"),
    ("sing", "sing"),
    ("conflated", "conflat"),
    ("troubled", "troubl"),
    ("sized", "size"),
    ("hopping", "hop"),
    ("tanned", "tan"),
    ("falling", "fall"),
    ("hissing", "hiss"),
    ("fizzed", "fizz"),
    ("failing", "fail"),
    ("filing", "file"),
    ("happy", "happi"),
    ("sky", "sky"),
    ("relational", "relat"),
    ("conditional", "condit"),
    ("rational", "ration"),
    ("valenci", "valenc"),
    ("hesitanci", "hesit"),
    ("digitizer", "digit"),
    ("conformabli", "conform"),
    ("radicalli", "radic"),
    ("differentli", "differ"),
    ("vileli", "vile"),
    ("analogousli", "analog"),
    ("vietnamization", "vietnam"),
    ("predication", "predic"),
    ("operator", "oper"),
    ("feudalism", "feudal"),
    ("decisiveness", "decis"),
    ("hopefulness", "hope"),
    ("callousness", "callous"),
    ("formaliti", "formal"),
    ("sensitiviti", "sensit"),
    ("sensibiliti", "sensibl"),
    ("triplicate", "triplic"),
    ("formative", "form"),
    ("formalize", "formal"),
    # iciti/ical reduce to -ic in step 3, which step 4 then strips at m>1
    ("electriciti", "electr"),
    ("electrical", "electr"),
    ("hopeful", "hope"),
    ("goodness", "good"),
    ("revival", "reviv"),
    ("allowance", "allow"),
    ("inference", "infer"),
    ("airliner", "airlin"),
    ("gyroscopic", "gyroscop"),
    ("adjustable", "adjust"),
    ("defensible", "defens"),
    ("irritant", "irrit"),
    ("replacement", "replac"),
    ("adjustment", "adjust"),
    ("dependent", "depend"),
    ("adoption", "adopt"),
    ("homologou", "homolog"),
    ("communism", "commun"),
    ("activate", "activ"),
    ("angulariti", "angular"),
    ("homologous", "homolog"),
    ("effective", "effect"),
    ("bowdlerize", "bowdler"),
    ("probate", "probat"),
    ("rate", "rate"),
    ("cease", "ceas"),
    ("controll", "control"),
    ("roll", "roll"),
    ("flying", "fly"),
    ("cars", "car"),
    ("dying", "dy"),
    ("crying", "cry"),
]


class TestGolden:
    def test_golden_pairs(self):
        for word, expected in GOLDEN:
            assert stem(word) == expected, f"{word!r} -> {stem(word)!r} != {expected!r}"


class TestEdges:
    def test_short_words_pass_through(self):
        for w in ("a", "is", "be", "ox", ""):
            assert stem(w) == w

    def test_idempotent_on_goldens(self):
        # stems are fixed points for these words; re-stemming must not drift
        for _, stemmed in GOLDEN:
            assert stem(stemmed) == stem(stem(stemmed))

    def test_plural_families(self):
        assert stem("cars") == stem("car")
        assert stem("flying") == stem("flew") or stem("flying") == "fly"
        assert stem("tables") == stem("table")
        assert stem("matching") == stem("matched")
