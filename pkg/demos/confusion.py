"""
Where adversarial examples land
===============================

Confusion matrices before and after the attack, and how often the two heads
fail on the same samples.
"""
import numpy as np

from reproto import adv_confusion, confusion_matrix, misclass_overlap, top_m_agreement
from reproto.experiments import BlobTask, attack_for

task = BlobTask(epochs=15)
train_set, test_set = task.data(1)
rep = task.train_repulsive(train_set, 1)
soft = task.train_softmax(train_set, 1)
cfg = attack_for(seed=1).with_eps(0.1)

natural = confusion_matrix(test_set.y, rep.predict(test_set.X), test_set.k)
cm_rep, res_rep = adv_confusion(rep, test_set, cfg)
cm_soft, res_soft = adv_confusion(soft, test_set, cfg)

np.set_printoptions(precision=2, suppress=True)
print("natural:\n", natural.counts)
print("adversarial, row-normalised:\n", cm_rep.row_normalized)
print("top-1 target agreement:", top_m_agreement(cm_rep, cm_soft, 1))
print("failure overlap (jaccard, over smaller):", misclass_overlap(res_rep, res_soft))
