import pytest

from scalelaw.packing import SamplePair, SpecialTokenRegistry

# Sentence-pair counts for an 11-direction bilingual corpus, per domain.
GENERAL_SIZES = {
    "ende": 46_528_535,
    "enes": 51_875_735,
    "enfr": 81_389_930,
    "enit": 26_214_900,
    "ennl": 42_741_603,
    "enpt": 42_024_152,
    "ensv": 46_353_741,
    "frde": 23_596_257,
    "fres": 32_902_641,
    "frit": 28_016_216,
    "frnl": 31_937_498,
}
FINANCE_SIZES = {
    "ende": 1_290_011,
    "enes": 1_336_689,
    "enfr": 8_289_408,
    "enit": 732_558,
    "ennl": 1_360_229,
    "enpt": 608_780,
    "ensv": 241_534,
    "frde": 1_461_153,
    "fres": 481_619,
    "frit": 1_104_489,
    "frnl": 619_198,
}
GENERAL_TOTAL = 453_581_208
FINANCE_TOTAL = 17_525_668

END_OF_SOURCE = 900
END_OF_SEQUENCE = 901
PAD = 0
LANG_IDS = {"en": 910, "fr": 911, "de": 912}
DOM_IDS = {"general": 920, "finance": 921}


@pytest.fixture
def registry() -> SpecialTokenRegistry:
    return SpecialTokenRegistry(
        end_of_source_id=END_OF_SOURCE,
        end_of_sequence_id=END_OF_SEQUENCE,
        pad_id=PAD,
        language_ids=dict(LANG_IDS),
        domain_ids=dict(DOM_IDS),
        vocab_size=1000,
    )


def make_pair(source, target, source_lang="en", target_lang="fr", domain="general") -> SamplePair:
    return SamplePair(
        source_tokens=tuple(source),
        target_tokens=tuple(target),
        source_lang=source_lang,
        target_lang=target_lang,
        domain=domain,
    )
