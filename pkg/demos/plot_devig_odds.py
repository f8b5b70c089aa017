"""
Removing the bookmaker margin
=============================

Decimal odds imply probabilities that sum to more than one. Dividing each
implied probability by their sum removes the margin, and the gap between the
win and loss probabilities says which side the market favoured.
"""

from fanstudy import OddsTriple, classify_expectation, devig, surprise_flag
from fanstudy.loaders import wc2022_matches, wc2022_odds

# Argentina's opener: heavy favourites at 1.12
probs = devig(OddsTriple(1.12, 9.21, 25.52))
print(f"overround {probs.overround:.2%}")
print(f"win {probs.p_win:.1%}  draw {probs.p_draw:.1%}  loss {probs.p_loss:.1%}")

# a margin above 30 percentage points marks a clear expectation
label = classify_expectation(probs)
print(label.label, f"(margin {label.margin:.1f} pp)")

# the match was lost, which makes it a surprise
print("surprise:", surprise_flag(label, "defeat"))

###############################################################################
# The bundled schedule covers all 21 tournament matches. Only the first row of
# odds is a published quote; the others are placeholders to show the flow.

odds = wc2022_odds()
for event in wc2022_matches()[:6]:
    triple, provenance = odds[event.event_id]
    lab = classify_expectation(devig(triple))
    flag = " surprise" if surprise_flag(lab, event.outcome) else ""
    print(f"{event.event_id:>2} {event.token_id:<4} {event.outcome:<8} {lab.label:<16} [{provenance}]{flag}")
