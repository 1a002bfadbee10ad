import numpy as np
import torch


def finite_difference_check(model, loss_fn, h=1e-5, rel_tol=1e-4, abs_tol=1e-9, sig_floor=1e-5):
    """Compare autograd parameter gradients of loss_fn() against central
    finite differences at 64-bit. Returns the max relative error over
    significant gradients (magnitude >= sig_floor).

    Every gradient must satisfy |a - fd| <= abs_tol + rel_tol * max(|a|, |fd|);
    the abs_tol guard absorbs FD roundoff where the true gradient is ~0 and a
    relative comparison would only measure noise.
    """
    model.zero_grad()
    loss_fn().backward()
    worst = 0.0
    for name, p in model.named_parameters():
        if p.grad is None:
            continue
        grad = p.grad.detach().clone().view(-1)
        flat = p.data.view(-1)
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + h
            f_plus = float(loss_fn().detach())
            flat[i] = orig - h
            f_minus = float(loss_fn().detach())
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * h)
            a = grad[i].item()
            denom = max(abs(a), abs(fd))
            assert abs(a - fd) <= abs_tol + rel_tol * denom, (
                f"{name}[{i}]: analytic {a} vs fd {fd}"
            )
            if denom >= sig_floor:
                rel = abs(a - fd) / denom
                if rel > worst:
                    worst = rel
                assert rel <= rel_tol, f"{name}[{i}]: analytic {a} vs fd {fd} (rel {rel:.2e})"
    return worst


def param_count(model) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def as_double(model):
    return model.double()


def seeded_sequences(seed, t, batch=1, dim=71, dtype=torch.float64):
    rng = np.random.default_rng(seed)
    pred = torch.tensor(rng.standard_normal((batch, t, dim)), dtype=dtype)
    target = torch.tensor(rng.standard_normal((batch, t, dim)), dtype=dtype)
    return pred, target
