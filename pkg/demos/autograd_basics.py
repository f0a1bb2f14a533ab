"""
The small autograd engine
=========================

Layers are composed from tensors that record a tape. Calling
``backward`` on a scalar fills in ``.grad`` for every parameter.
"""
import numpy as np

from sgcoarse import nn
from sgcoarse.graph import sym_normalize

rng = np.random.default_rng(0)

##############################################################################
# A four-node path graph and random features.
A = np.zeros((4, 4))
for i in range(3):
    A[i, i + 1] = A[i + 1, i] = 1
A_norm = sym_normalize(A)
X = rng.normal(size=(4, 3))

W = nn.Parameter(nn.glorot_uniform((2, 3), rng), "W")
b = nn.Parameter(np.zeros(2), "b")

W_out = nn.Parameter(nn.glorot_uniform((6, 2), rng), "W_out")
graph_index = np.zeros(4, int)


def forward():
    H = nn.gcn_layer(X, A_norm, W, b)
    return nn.softmax_cross_entropy(nn.linear(nn.global_mean_pool(H, graph_index, 1), W_out), [2])


##############################################################################
# One GCN layer, mean pooling, and a cross-entropy loss.
loss = forward()
loss.backward()
print("loss:", loss.item())
print("dL/dW:\n", W.grad)

##############################################################################
# Compare one entry against a central difference.
eps = 1e-6
W.data[0, 1] += eps
up = forward().item()
W.data[0, 1] -= 2 * eps
down = forward().item()
W.data[0, 1] += eps
print("analytic", W.grad[0, 1], "numeric", (up - down) / (2 * eps))

##############################################################################
# A few Adam steps push the loss down.
opt = nn.Adam([W, b, W_out], lr=0.05)
for step in range(5):
    opt.zero_grad()
    loss = forward()
    loss.backward()
    opt.step()
    print(step, round(loss.item(), 4))
