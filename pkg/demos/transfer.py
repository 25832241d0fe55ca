"""
Black-box transfer
==================

Adversarial examples crafted on a separately trained softmax network are
replayed against a prototype network and compared with a direct attack.
"""
from reproto import robust_accuracy, transfer_eval
from reproto.experiments import BlobTask, attack_for

task = BlobTask(epochs=15)
train_set, test_set = task.data(3)
target = task.train_repulsive(train_set, 3)
substitute = task.train_softmax(train_set, 103)

cfg = attack_for(restarts=3, seed=3).with_eps(0.12)
(black,), _ = transfer_eval(substitute, [target], test_set, cfg)
white, _ = robust_accuracy(target, test_set, cfg)
print(f"white-box robust accuracy {white:.3f}, black-box {black:.3f}")
