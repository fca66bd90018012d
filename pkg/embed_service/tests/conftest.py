import pytest
import torch
from tokenizers import Tokenizer, models, normalizers, pre_tokenizers, processors
from transformers import BertConfig, BertModel, PreTrainedTokenizerFast

# The sandbox has no model-hub access, so tests build a tiny local encoder
# once and load it through the exact same from_pretrained path the service
# uses for real checkpoints. Every contract under test (shapes, norms,
# determinism, self-similarity) is weight-agnostic.

WORDS = [
    "the", "a", "cat", "dog", "chart", "line", "bar", "value", "peak", "is",
    "what", "of", "hello", "world", "series", "code", "sentence", "short",
    "test", "axis", "label", "trend", "figure", "plot", "reads", "against",
]


def _vocab_list():
    specials = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    chars = [chr(c) for c in range(ord("a"), ord("z") + 1)] + [str(d) for d in range(10)]
    pieces = ["##" + c for c in chars]
    seen, vocab = set(), []
    for token in specials + WORDS + chars + pieces:
        if token not in seen:
            seen.add(token)
            vocab.append(token)
    return vocab


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory) -> str:
    out = tmp_path_factory.mktemp("tiny-encoder")
    vocab_list = _vocab_list()
    vocab = {t: i for i, t in enumerate(vocab_list)}

    wordpiece = models.WordPiece(vocab, unk_token="[UNK]", max_input_chars_per_word=64)
    tokenizer = Tokenizer(wordpiece)
    tokenizer.normalizer = normalizers.BertNormalizer(lowercase=True)
    tokenizer.pre_tokenizer = pre_tokenizers.BertPreTokenizer()
    tokenizer.post_processor = processors.TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", vocab["[CLS]"]), ("[SEP]", vocab["[SEP]"])],
    )
    PreTrainedTokenizerFast(
        tokenizer_object=tokenizer,
        unk_token="[UNK]",
        pad_token="[PAD]",
        cls_token="[CLS]",
        sep_token="[SEP]",
        mask_token="[MASK]",
    ).save_pretrained(out)

    torch.manual_seed(20250810)
    config = BertConfig(
        vocab_size=len(vocab_list),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=128,
    )
    BertModel(config).save_pretrained(out)
    return str(out)
