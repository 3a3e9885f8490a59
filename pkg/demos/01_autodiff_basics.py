"""Tour of the autodiff core: tapes, gradients, gradient reversal, SGD.

Run:  python3 demos/01_autodiff_basics.py
"""
import numpy as np

from radalab import SgdMomentum, Tensor, backward, grad_reverse
from radalab import autodiff as ad

print("== tensors and the tape ==")
x = Tensor([3.0], requires_grad=True)
loss = ad.total(ad.mul(x, x))          # f(x) = x^2
backward(loss)
print(f"f(x) = x^2 at x=3: f={loss.item():.1f}, df/dx={x.grad[0]:.1f} (expect 6)")

print("\n== a small MLP under the same tape ==")
rng = np.random.default_rng(0)
w1 = Tensor(rng.uniform(-0.5, 0.5, (2, 8)), requires_grad=True)
w2 = Tensor(rng.uniform(-0.5, 0.5, (8, 1)), requires_grad=True)
inputs = Tensor(rng.uniform(-1, 1, (16, 2)))
out = ad.sigmoid(ad.matmul(ad.relu(ad.matmul(inputs, w1)), w2))
backward(ad.mean(out), params=[w1, w2])
print(f"mean output {ad.mean(out).item():.4f}; grad norms "
      f"|dw1|={np.linalg.norm(w1.grad):.4f} |dw2|={np.linalg.norm(w2.grad):.4f}")

print("\n== gradient reversal: identity forward, -lambda backward ==")
feats = Tensor([[1.0, -2.0]], requires_grad=True)
flipped = grad_reverse(feats, 0.5)
print("forward unchanged:", flipped.data.tolist())
backward(ad.total(flipped), params=[feats])
print("upstream gradient of ones becomes:", feats.grad.tolist(), "(times -0.5)")

print("\n== SGD with momentum: v <- m v + g, p <- p - lr v ==")
p = Tensor([0.0], requires_grad=True)
opt = SgdMomentum({"p": p}, lr=0.1, momentum=0.9)
for step in range(3):
    p.grad = np.array([1.0])
    opt.step()
    print(f"step {step + 1}: v={opt.velocities['p'][0]:.3f} p={p.data[0]:.4f}")
print("(first step is plain SGD: v=1, p=-0.1; then momentum compounds)")
