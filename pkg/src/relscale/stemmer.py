"""English (Porter2) suffix-stripping stemmer.

Implemented from the published Snowball English algorithm so that token
matching does not depend on an external stemming package.  Conformance is
checked against the committed oracle word list in tests/fixtures.

Regions R1/R2 are tracked as absolute left positions in the evolving
word: a suffix lies in R1 iff ``len(word) - len(suffix) >= r1``.  All
edits are suffix edits, so the positions stay valid throughout.
"""

_VOWELS = "aeiouy"
_DOUBLES = ("bb", "dd", "ff", "gg", "mm", "nn", "pp", "rr", "tt")
_LI_ENDINGS = "cdeghkmnrt"

_EXCEPTIONS = {
    "skis": "ski",
    "skies": "sky",
    "dying": "die",
    "lying": "lie",
    "tying": "tie",
    "idly": "idl",
    "gently": "gentl",
    "ugly": "ugli",
    "early": "earli",
    "only": "onli",
    "singly": "singl",
    "sky": "sky",
    "news": "news",
    "howe": "howe",
    "atlas": "atlas",
    "cosmos": "cosmos",
    "bias": "bias",
    "andes": "andes",
}

_EXCEPTIONS_POST_1A = frozenset(
    ["inning", "outing", "canning", "herring", "earring",
     "proceed", "exceed", "succeed"]
)

_STEP2_RULES = (
    ("ization", "ize"),
    ("ational", "ate"),
    ("fulness", "ful"),
    ("ousness", "ous"),
    ("iveness", "ive"),
    ("tional", "tion"),
    ("biliti", "ble"),
    ("lessli", "less"),
    ("entli", "ent"),
    ("ation", "ate"),
    ("alism", "al"),
    ("aliti", "al"),
    ("ousli", "ous"),
    ("iviti", "ive"),
    ("fulli", "ful"),
    ("enci", "ence"),
    ("anci", "ance"),
    ("abli", "able"),
    ("izer", "ize"),
    ("ator", "ate"),
    ("alli", "al"),
    ("bli", "ble"),
)

_STEP3_RULES = (
    ("ational", "ate"),
    ("tional", "tion"),
    ("alize", "al"),
    ("icate", "ic"),
    ("iciti", "ic"),
    ("ical", "ic"),
    ("ness", ""),
    ("ful", ""),
)

_STEP4_SUFFIXES = (
    "ement", "ance", "ence", "able", "ible", "ment",
    "ant", "ent", "ism", "ate", "iti", "ous", "ive", "ize",
    "al", "er", "ic",
)


def _is_vowel(ch):
    return ch in _VOWELS


def _compute_r1(word):
    if word.startswith(("gener", "arsen")):
        return 5
    if word.startswith("commun"):
        return 6
    for i in range(1, len(word)):
        if not _is_vowel(word[i]) and _is_vowel(word[i - 1]):
            return i + 1
    return len(word)


def _compute_r2(word, r1):
    for i in range(r1 + 1, len(word)):
        if not _is_vowel(word[i]) and _is_vowel(word[i - 1]):
            return i + 1
    return len(word)


def _ends_in_short_syllable(word):
    # Either non-vowel, vowel, non-vowel(not w/x/Y) at the end, or a
    # two-letter word of the form vowel + non-vowel.
    if len(word) >= 3:
        a, b, c = word[-3], word[-2], word[-1]
        return (not _is_vowel(a)) and _is_vowel(b) \
            and (not _is_vowel(c)) and c not in "wxY"
    if len(word) == 2:
        return _is_vowel(word[0]) and not _is_vowel(word[1])
    return False


def _is_short_word(word, r1):
    return r1 >= len(word) and _ends_in_short_syllable(word)


def _has_vowel(fragment):
    return any(_is_vowel(ch) for ch in fragment)


def _step_0(word):
    for suffix in ("'s'", "'s", "'"):
        if word.endswith(suffix):
            return word[:-len(suffix)]
    return word


def _step_1a(word):
    if word.endswith("sses"):
        return word[:-2]
    if word.endswith(("ied", "ies")):
        if len(word) > 4:
            return word[:-2]
        return word[:-1]
    if word.endswith(("us", "ss")):
        return word
    if word.endswith("s") and _has_vowel(word[:-2]):
        return word[:-1]
    return word


def _step_1b(word, r1):
    for suffix in ("eedly", "eed"):
        if word.endswith(suffix):
            if len(word) - len(suffix) >= r1:
                return word[:-len(suffix)] + "ee"
            return word
    for suffix in ("ingly", "edly", "ing", "ed"):
        if word.endswith(suffix):
            stem = word[:-len(suffix)]
            if not _has_vowel(stem):
                return word
            if stem.endswith(("at", "bl", "iz")):
                return stem + "e"
            if stem.endswith(_DOUBLES):
                return stem[:-1]
            if _is_short_word(stem, r1):
                return stem + "e"
            return stem
    return word


def _step_1c(word):
    if len(word) > 2 and word[-1] in "yY" and not _is_vowel(word[-2]):
        return word[:-1] + "i"
    return word


def _step_2(word, r1):
    for suffix, repl in _STEP2_RULES:
        if word.endswith(suffix):
            if len(word) - len(suffix) >= r1:
                return word[:-len(suffix)] + repl
            return word
    if word.endswith("ogi"):
        if len(word) - 3 >= r1 and len(word) >= 4 and word[-4] == "l":
            return word[:-1]
        return word
    if word.endswith("li"):
        if len(word) - 2 >= r1 and len(word) >= 3 and word[-3] in _LI_ENDINGS:
            return word[:-2]
        return word
    return word


def _step_3(word, r1, r2):
    for suffix, repl in _STEP3_RULES:
        if word.endswith(suffix):
            if len(word) - len(suffix) >= r1:
                return word[:-len(suffix)] + repl
            return word
    if word.endswith("ative"):
        if len(word) - 5 >= r2:
            return word[:-5]
        return word
    return word


def _step_4(word, r2):
    for suffix in _STEP4_SUFFIXES:
        if word.endswith(suffix):
            if len(word) - len(suffix) >= r2:
                return word[:-len(suffix)]
            return word
    if word.endswith("ion"):
        if len(word) - 3 >= r2 and len(word) >= 4 and word[-4] in "st":
            return word[:-3]
    return word


def _step_5(word, r1, r2):
    if word.endswith("e"):
        if len(word) - 1 >= r2:
            return word[:-1]
        if len(word) - 1 >= r1 and not _ends_in_short_syllable(word[:-1]):
            return word[:-1]
        return word
    if word.endswith("l"):
        if len(word) - 1 >= r2 and len(word) >= 2 and word[-2] == "l":
            return word[:-1]
    return word


def stem(word):
    """Return the Porter2 stem of ``word`` (lowercased first)."""
    word = word.lower()
    if len(word) <= 2:
        return word
    if word in _EXCEPTIONS:
        return _EXCEPTIONS[word]

    word = word.replace("’", "'").replace("‘", "'") \
               .replace("‛", "'")
    if word.startswith("'"):
        word = word[1:]
        if len(word) <= 2:
            return word

    # Mark y's that act as consonants so region logic treats them as such.
    if word.startswith("y"):
        word = "Y" + word[1:]
    chars = list(word)
    for i in range(1, len(chars)):
        if chars[i] == "y" and _is_vowel(chars[i - 1]):
            chars[i] = "Y"
    word = "".join(chars)

    r1 = _compute_r1(word)
    r2 = _compute_r2(word, r1)

    word = _step_0(word)
    word = _step_1a(word)
    if word in _EXCEPTIONS_POST_1A:
        return word
    word = _step_1b(word, r1)
    word = _step_1c(word)
    word = _step_2(word, r1)
    word = _step_3(word, r1, r2)
    word = _step_4(word, r2)
    word = _step_5(word, r1, r2)

    return word.replace("Y", "y")
