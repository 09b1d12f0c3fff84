"""A tour of the caption metrics on small, hand-checkable examples."""

from salcap import metrics
from salcap.metrics import CaptionCorpus

# Corpus-level BLEU with clipped n-gram counts: "a a a" can only claim one
# "a" against the reference "a b", so unigram precision is 1/3.
corpus = CaptionCorpus.from_pairs([("img", "a a a", ["a b"])])
print("clipping case B@1..4:", [round(s, 4) for s in metrics.bleu(corpus)])

# The brevity penalty punishes candidates shorter than their closest
# reference: two words against four costs a factor exp(1 - 4/2).
short = CaptionCorpus.from_pairs([("img", "a b", ["a b c d"])])
print("brevity-penalized B@1:", round(metrics.bleu(short)[0], 4))

# ROUGE_L is an LCS F-measure (recall-weighted, beta = 1.2).
rouge_corpus = CaptionCorpus.from_pairs([("img", "a b c", ["a c"])])
print("ROUGE_L for cand 'a b c' vs ref 'a c':", round(metrics.rouge_l(rouge_corpus), 4))

# CIDEr weights n-grams by TF-IDF across the corpus before taking cosine
# consensus.  Two disjoint exact matches with 2-word sentences only have
# unigram and bigram orders, so the order average lands at 0.5.
cider_corpus = CaptionCorpus.from_pairs(
    [("one", "x y", ["x y"]), ("two", "p q", ["p q"])]
)
print("two-image CIDEr:", metrics.cider(cider_corpus))

# Corpus statistics over a generated caption set
generated = ["a b", "a c"]
print("\ndiversity over {'a b', 'a c'}:", metrics.diversity_stats(generated))
print("novelty vs training {'a b'}:", metrics.novelty_pct(generated, ["a b"]), "%")
print(
    "difference between two models:",
    metrics.difference_pct({"1": "a b", "2": "a c"}, {"1": "a b", "2": "c a"}),
    "%",
)
