"""Segmentation metrics on hand-sized label sequences.

Run: python3 demos/metrics_walkthrough.py
"""

from partseg.boundary import detect_boundaries, majority_smooth
from partseg.metrics import edit_score, evaluate, f1_at, frame_accuracy

gt = [0] * 10 + [1] * 10
pred = [0] * 10 + [1] * 5 + [0] * 5

print("frame accuracy", frame_accuracy(pred, gt))
print("edit score     %.2f" % edit_score(pred, gt))
r = f1_at(pred, gt, 0.5)
print("F1@0.5         %.2f (precision %.2f, recall %.2f, tp/fp/fn %d/%d/%d)"
      % (r.f1, r.precision, r.recall, r.tp, r.fp, r.fn))

# greedy temporal-order matching can claim a ground-truth segment that a later
# prediction needed; the optimal matching recovers the extra true positive
pred = [0] * 7 + [1] * 6 + [0] * 10
gt = [0] + [1] * 2 + [0] * 14 + [1] * 6
for matching in ("greedy", "optimal"):
    r = f1_at(pred, gt, 0.1, matching=matching)
    print(f"{matching:8s} tp={r.tp} fp={r.fp} fn={r.fn} F1@0.1={r.f1:.2f}")

# boundary probabilities -> peaks -> majority vote inside each region
p = [0.1, 0.2, 0.9, 0.3, 0.1, 0.1, 0.7, 0.7, 0.2, 0.1]
frames = [0, 0, 1, 1, 0, 1, 2, 2, 2, 1]
bounds = detect_boundaries(p, 0.5)
print("boundaries", bounds)
print("raw     ", frames)
print("smoothed", majority_smooth(frames, bounds).tolist())

report = evaluate([(pred, gt), (frames, [0, 0, 1, 1, 1, 1, 2, 2, 2, 2])], names=["a", "b"])
print("pooled acc %.2f, mean edit %.2f, F1@0.5 %.2f" % (report.acc, report.edit, report.f1[0.5]))
