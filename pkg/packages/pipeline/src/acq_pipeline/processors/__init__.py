"""
Pipeline processors.

- quantizer: fake quantization, observers, quantized graph copies
- attention: attention maps, centers, heatmap export, diagnostics
- generator: the conditional generator and its condition fusion paths
- losses: every generator / student loss term and the combined objectives
- training: warm-up calibration and the alternating training loop
- data: shapes dataset, CIFAR-10 reader, teacher pretraining
- metrics: BNS error, mode consistency, attention controllability
- harness: sweep and ablation runs over seeds
"""
