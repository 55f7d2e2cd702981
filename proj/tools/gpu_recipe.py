#!/usr/bin/env python3
"""GPU companion for the CIFAR10 vehicle experiment.

The C++ trainer runs on one CPU thread, which is fine for tiny mode but far
too slow for ResNet18 on 18k images for 1500+ epochs. This script follows the
same protocol in PyTorch and writes metrics.csv in the same schema, so
`clab detect` and `clab plot` work on its output unchanged.

    python tools/gpu_recipe.py --config configs/cifar10_vehicles.json \
        --data-root /data/cifar-10-batches-bin --output-dir runs/cifar_gpu

Differences from the C++ path: padding uses the training-set channel mean
instead of each image's own mean, and augmentation random streams differ, so
curves match in shape but not bit for bit.
"""

import argparse
import json
import os
import time
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
import torchvision
import torchvision.transforms.v2 as T

CLASSES = ["airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck"]
HEADER = "epoch,split,total_loss,positive_term,negative_term,wall_time_s"


def load_cifar(root, include):
    root = Path(root)
    if not (root / "data_batch_1.bin").exists():
        root = root / "cifar-10-batches-bin"
    raw = np.concatenate([np.fromfile(root / f"data_batch_{i}.bin", dtype=np.uint8) for i in range(1, 6)])
    raw = raw.reshape(-1, 3073)
    labels, images = raw[:, 0].astype(np.int64), raw[:, 1:].reshape(-1, 3, 32, 32)
    keep = np.isin(labels, [CLASSES.index(c.lower()) for c in include])
    return images[keep], labels[keep]


def stratified_split(labels, fraction, seed):
    rng = np.random.default_rng(seed)
    train, val = [], []
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        cut = int(round(fraction * len(idx)))
        train += idx[:cut].tolist()
        val += idx[cut:].tolist()
    return np.sort(train), np.sort(val)


def augmentation(cfg, mean, std):
    a = cfg["augmentation"]
    side = cfg["model"]["input_size"]
    k = int(round(a["blur_kernel_fraction"] * side))
    k += 1 if k % 2 == 0 else 0
    j = a["jitter"]
    steps = [
        T.Pad(int(round(a["pad_fraction"] * side)), fill=[float(m) for m in mean]),
        T.RandomCrop(a["crop_size"]),
        T.RandomHorizontalFlip(a["hflip_prob"]),
        T.RandomApply([T.ColorJitter(j["brightness"], j["contrast"], j["saturation"], j["hue"])], p=a["jitter_prob"]),
        T.RandomGrayscale(a["grayscale_prob"]),
    ]
    if k > 1:
        steps.append(T.GaussianBlur(k, sigma=tuple(a["blur_sigma_range"])))
    steps.append(T.Normalize(mean.tolist(), std.tolist()))
    return T.Compose(steps)


def pair_views(images, transform):
    # Rows 2k and 2k + 1 are the two views of source k.
    views = [v for img in images for v in (transform(img), transform(img))]
    return torch.stack(views)


class SimCLR(nn.Module):
    def __init__(self, spec):
        super().__init__()
        net = torchvision.models.resnet18(num_classes=10)
        net.conv1 = nn.Conv2d(3, 64, 3, 1, 1, bias=False)
        net.maxpool = nn.Identity()
        net.fc = nn.Identity()
        self.backbone = net
        self.head = nn.Sequential(
            nn.Linear(spec["backbone_output_dim"], spec["projection_hidden_dim"]),
            nn.ReLU(inplace=True),
            nn.Linear(spec["projection_hidden_dim"], spec["projection_output_dim"]),
        )

    def forward(self, x):
        return self.head(self.backbone(x))


def decomposed_ntxent(z, tau):
    u = F.normalize(z, dim=1)
    s = (u @ u.T).clamp(-1, 1) / tau
    n2 = s.shape[0]
    partner = torch.arange(n2, device=z.device) ^ 1
    positive = -s[torch.arange(n2), partner]
    negative = torch.logsumexp(s.masked_fill(torch.eye(n2, dtype=torch.bool, device=z.device), float("-inf")), dim=1)
    return (positive + negative).mean(), positive.mean(), negative.mean()


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", required=True)
    p.add_argument("--data-root", default=None)
    p.add_argument("--output-dir", default=None)
    args = p.parse_args()

    with open(args.config) as f:
        cfg = json.loads("\n".join(l for l in f if not l.lstrip().startswith("//")))
    root = args.data_root or cfg["dataset"]["root"] or os.environ.get("CONTRASTLAB_DATA_ROOT", "")
    out = Path(args.output_dir or cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    seed, n, tau = cfg["run_seed"], cfg["batch_pairs"], cfg["loss"]["temperature"]
    torch.manual_seed(seed)
    device = "cuda" if torch.cuda.is_available() else "cpu"

    images, labels = load_cifar(root, cfg["dataset"]["included_classes"])
    train_idx, val_idx = stratified_split(labels, cfg["dataset"]["train_fraction"], seed)
    val_idx = val_idx[: len(val_idx) // n * n]
    data = torch.from_numpy(images).float() / 255
    mean = data[train_idx].mean(dim=(0, 2, 3))
    std = data[train_idx].std(dim=(0, 2, 3))
    transform = augmentation(cfg, mean, std)

    # Validation views are drawn once so every epoch sees the same batches.
    torch.manual_seed(seed + 1)
    val_views = [pair_views(data[val_idx[b : b + n]], transform) for b in range(0, len(val_idx), n)]

    model = SimCLR(cfg["model"]).to(device)
    opt = torch.optim.Adam(model.parameters(), lr=cfg["learning_rate"])
    metrics = open(out / "metrics.csv", "w")
    metrics.write(HEADER + "\n")

    def row(epoch, split, sums, count, start):
        t, pos, neg = (v / count for v in sums)
        metrics.write(f"{epoch},{split},{t:.17g},{pos:.17g},{neg:.17g},{time.time() - start:.17g}\n")
        metrics.flush()
        return t

    for epoch in range(1, cfg["max_epochs"] + 1):
        start = time.time()
        model.train()
        order = torch.from_numpy(train_idx)[torch.randperm(len(train_idx))]
        sums, count = [0.0, 0.0, 0.0], 0
        for b in range(0, len(order) - n + 1, n):
            x = pair_views(data[order[b : b + n]], transform).to(device, non_blocking=True)
            total, pos, neg = decomposed_ntxent(model(x), tau)
            opt.zero_grad(set_to_none=True)
            total.backward()
            opt.step()
            sums = [s + v.item() for s, v in zip(sums, (total, pos, neg))]
            count += 1
        train_loss = row(epoch, "train", sums, count, start)

        start = time.time()
        model.eval()
        sums = [0.0, 0.0, 0.0]
        with torch.no_grad():
            for x in val_views:
                vals = decomposed_ntxent(model(x.to(device)), tau)
                sums = [s + v.item() for s, v in zip(sums, vals)]
        val_loss = row(epoch, "val", sums, len(val_views), start)
        print(f"epoch {epoch} train {train_loss:.5f} val {val_loss:.5f}", flush=True)

    metrics.close()
    print(f"wrote {out / 'metrics.csv'}; next: clab detect {out / 'metrics.csv'} && "
          f"clab plot {out / 'metrics.csv'} --output {out / 'fig'}")


if __name__ == "__main__":
    main()
