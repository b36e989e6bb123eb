"""Social-media-aware tokenizer.

Splits message text into classified tokens while keeping platform
constructs whole:

* handles (``@NASA``), hashtags (``#metoo``), cashtags/tickers (``$AAPL``)
* links (``https://www.google.com/``, ``www.example.org``)
* currency amounts (``$9.99``), decimal/grouped numbers (``3.14``, ``1,000``)
* date and time strings (``2018-01-01``, ``2001/9/11``, ``11:59pm``)
* contractions, hyphenations and ampersand acronyms
  (``It's``, ``well-organized``, ``B&M``)
* HTML named entities (``&amp;``) as single word tokens
* emoji, one token per grapheme cluster, including ZWJ sequences,
  skin-tone modifiers, keycaps and regional-indicator flag pairs; a run
  of k emoji with no whitespace yields k tokens

Everything else that is not whitespace becomes a single punctuation
token, so no input character is ever dropped.  The tokenizer never
changes case and never normalizes: token texts are verbatim slices of
the input.

Matching is single-pass and deterministic: at each position the rule
producing the longest match wins, and equal lengths are resolved by the
fixed class precedence

    url > handle > hashtag > ticker > currency > datetime > number
        > word > emoji > punctuation

The production scanner gets this policy from the regex module's POSIX
(leftmost-longest) matching over an alternation listed in precedence
order; ``reference_tokenize`` implements the same policy with an
explicit per-position scan and is compared against it in tests.  See
``docs/tokenizer.md`` for the full rule table.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Sequence, Union

import regex


class TokenClass(str, enum.Enum):
    WORD = "word"
    HANDLE = "handle"
    HASHTAG = "hashtag"
    TICKER = "ticker"
    EMOJI = "emoji"
    URL = "url"
    CURRENCY = "currency"
    NUMBER = "number"
    DATETIME = "datetime"
    PUNCTUATION = "punctuation"


@dataclass(frozen=True)
class Token:
    """One classified unit of text: non-empty, whitespace-free, verbatim case."""

    text: str
    cls: TokenClass


class NgramKey(NamedTuple):
    """Identity of an n-gram: token texts joined by single U+0020 spaces."""

    text: str
    n: int

    def parts(self) -> list[str]:
        return self.text.split(" ")


# Word characters, minus the combining keycap mark so that keycap
# sequences like "5⃣" stay with the emoji rule instead of being glued
# onto digits and words (`\w` includes combining marks).
_WC = r"[^\W⃣]"

# Emoji building blocks.  Classification follows the Unicode emoji data
# properties: a cluster counts as emoji when it starts with a
# default-emoji-presentation character, a regional-indicator flag pair,
# a keycap sequence, or an extended-pictographic character promoted by
# VS16 / a skin-tone modifier / a ZWJ continuation.  Text-presentation
# singletons like "©" fall through to the punctuation rule.
_RI = r"[\U0001F1E6-\U0001F1FF]"
_SKIN = r"[\U0001F3FB-\U0001F3FF]"
_TAG = r"[\U000E0020-\U000E007F]"
_VS = r"[︎️]"
_ZWJ = "‍"
_EXT = rf"(?:{_VS}|{_SKIN}|{_TAG})"
_EP = r"\p{Extended_Pictographic}"
_EMOJI_CORE = rf"(?:{_RI}{_RI}|{_EP})"
_EMOJI_START = rf"(?:{_RI}{_RI}|\p{{Emoji_Presentation}}|{_EP}(?=️|{_SKIN}|{_ZWJ}))"
_KEYCAP = r"[0-9#*]️?⃣"
_EMOJI = (
    rf"(?:{_KEYCAP}|{_EMOJI_START}{_EXT}*(?:{_ZWJ}{_EMOJI_CORE}{_EXT}*)*)"
)

# One pattern per token class, listed in precedence order (ties in
# match length go to the earlier class).  Patterns must not contain
# capturing groups.
_BRANCHES: list[tuple[TokenClass, str]] = [
    (TokenClass.URL, r"(?:https?://|www\.)(?:[^\s]*[^\s.,;:!?)\]'\"])?"),
    (TokenClass.HANDLE, rf"@{_WC}+"),
    (TokenClass.HASHTAG, rf"\#{_WC}+"),
    (TokenClass.TICKER, r"\$[A-Za-z]{1,6}(?:[._][A-Za-z]{1,4})?"),
    (TokenClass.CURRENCY, r"\p{Sc}\d+(?:[.,]\d+)*"),
    (
        TokenClass.DATETIME,
        r"(?:\d{1,4}[-/.]\d{1,2}[-/.]\d{1,4}"
        r"|\d{1,2}:\d{2}(?::\d{2})?(?:[AaPp][Mm])?"
        r"|\d{1,2}[AaPp][Mm])",
    ),
    (TokenClass.NUMBER, r"\d+(?:[.,]\d+)*"),
    (TokenClass.WORD, rf"(?:{_WC}+(?:['’\-&]{_WC}+)*|&{_WC}+;)"),
    (TokenClass.EMOJI, _EMOJI),
    (TokenClass.PUNCTUATION, r"\S[︎️]?"),
]

_CLASSES = [cls for cls, _ in _BRANCHES]
_MASTER_NAMED = regex.compile(
    "|".join(f"(?P<{cls.value}>{p})" for cls, p in _BRANCHES), regex.POSIX
)
_MASTER_PLAIN = regex.compile(
    "|".join(f"(?:{p})" for _, p in _BRANCHES), regex.POSIX
)


def tokenize(text: str) -> list[Token]:
    """Split ``text`` into classified tokens, in input order."""
    return [
        Token(m.group(), TokenClass(m.lastgroup))
        for m in _MASTER_NAMED.finditer(text)
    ]


# Fast path for the overwhelmingly common case: a whitespace-delimited
# chunk that is one plain word token (letter-led, so no other class can
# claim it).  Must stay a strict subset of the word branch.
_SIMPLE_WORD = regex.compile(rf"\p{{L}}{_WC}*(?:['’\-&]{_WC}+)*").fullmatch


def token_texts(text: str) -> list[str]:
    """Token texts only; same segmentation as :func:`tokenize`, faster."""
    out: list[str] = []
    for chunk in text.split():
        if _SIMPLE_WORD(chunk) is not None:
            out.append(chunk)
        else:
            out.extend(_MASTER_PLAIN.findall(chunk))
    return out


def ngrams(tokens: Sequence[Union[Token, str]], n: int) -> list[NgramKey]:
    """All contiguous n-token windows, texts joined by a single space."""
    if n not in (1, 2, 3):
        raise ValueError(f"n must be 1, 2 or 3, got {n!r}")
    texts = [t.text if isinstance(t, Token) else t for t in tokens]
    return [
        NgramKey(" ".join(texts[i : i + n]), n) for i in range(len(texts) - n + 1)
    ]


# Languages written without word-delimiting whitespace; their messages
# are counted in message volume but emit no n-grams.
CONTINUOUS_SCRIPT_LANGUAGES = frozenset({"ja", "zh", "th", "km", "lo", "my"})

_DENSE_SCRIPT = regex.compile(r"[\p{Han}\p{Hiragana}\p{Katakana}\p{Thai}]")
_LETTER = regex.compile(r"\p{L}")


def is_segmentable(language_code: str, text: str) -> bool:
    """Whether n-grams can be extracted for this message.

    False for the continuous-script language set and for text whose
    letters are more than 50% Han/Hiragana/Katakana/Thai.
    """
    if language_code in CONTINUOUS_SCRIPT_LANGUAGES:
        return False
    if _DENSE_SCRIPT.search(text) is None:
        return True
    dense = len(_DENSE_SCRIPT.findall(text))
    letters = len(_LETTER.findall(text))
    return 2 * dense <= letters


_WS = regex.compile(r"\s")
_ANCHORED = [(cls, regex.compile(p, regex.POSIX)) for cls, p in _BRANCHES]


def reference_tokenize(text: str) -> list[Token]:
    """Longest-match reference scanner; slow, used to validate the master pattern.

    At each position every class pattern is tried anchored; the longest
    match wins and equal lengths are resolved by class precedence.  The
    production pattern in :func:`tokenize` must agree with this scanner
    on every input; tests compare the two.
    """
    out: list[Token] = []
    i, end = 0, len(text)
    while i < end:
        if _WS.match(text, i) is not None:
            i += 1
            continue
        best_cls = TokenClass.PUNCTUATION
        best_len = 0
        for cls, pat in _ANCHORED:
            m = pat.match(text, i)
            if m is not None and m.end() - i > best_len:
                best_cls = cls
                best_len = m.end() - i
        if best_len == 0:  # unreachable: the punctuation branch matches any \S
            best_len = 1
        out.append(Token(text[i : i + best_len], best_cls))
        i += best_len
    return out


def classify(text: str) -> TokenClass:
    """Class of a single already-extracted token text."""
    toks = tokenize(text)
    if len(toks) != 1 or toks[0].text != text:
        raise ValueError(f"not a single token: {text!r}")
    return toks[0].cls
