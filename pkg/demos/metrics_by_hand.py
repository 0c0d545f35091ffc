"""
Scoring generated text
======================

Each metric on a small pair that can be checked by hand.
"""

from injtype.metrics import bleu4, entity_order_error, lcs_length, levenshtein, meteor_simplified, rouge2, rougeL

gold = "the president met the minister in kabul".split()
hyp = "the minister met the president in kabul".split()

print("BLEU-4 ", round(bleu4(hyp, [gold]), 4))
print("ROUGE-2", round(rouge2(hyp, gold), 4))
# LCS is 5 tokens: the, met, the, in, kabul
print("LCS    ", lcs_length(hyp, gold))
print("ROUGE-L", round(rougeL(hyp, gold), 4))
print("METEOR ", round(meteor_simplified(hyp, gold), 4))

print("edit distance kitten/sitting:", levenshtein("kitten", "sitting"))

# swapped mentions cost two edits
print("order error:", entity_order_error(["president", "minister"], hyp))
