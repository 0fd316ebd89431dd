"""Convert a Keras ``InceptionV3`` into a portable weights archive.

Needs ``keras`` (not a package dependency). Conv and batch-norm layers are
matched to registry nodes by creation order, which both sides share (Keras
keeps it in the layer-name suffix)::

    python -m ctxfer.convert --out inception_v3_imagenet.npz
"""

import argparse

from .backbone import conv_param_names, get_architecture, save_weights_archive


def _creation_index(layer):
    # functional models list layers topologically; the name suffix keeps creation order
    _, _, suffix = layer.name.rpartition("_")
    return int(suffix) if suffix.isdigit() else 0


def keras_to_tensors(keras_model, architecture="inception_v3"):
    graph = get_architecture(architecture)
    convs = sorted((l for l in keras_model.layers if type(l).__name__ == "Conv2D"), key=_creation_index)
    bns = sorted(
        (l for l in keras_model.layers if type(l).__name__ == "BatchNormalization"), key=_creation_index
    )
    nodes = [n for n in graph.nodes if n.op == "conv"]
    if not (len(convs) == len(bns) == len(nodes)):
        raise ValueError(
            f"layer count mismatch: {len(convs)} conv / {len(bns)} bn vs {len(nodes)} registry nodes"
        )
    tensors = {}
    for node, conv, bn in zip(nodes, convs, bns):
        k, beta, mean, var = conv_param_names(node.name)
        tensors[k] = conv.get_weights()[0]
        b, m, v = bn.get_weights()  # scale=False: beta, moving mean, moving variance
        tensors[beta], tensors[mean], tensors[var] = b, m, v
    return tensors


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True)
    parser.add_argument("--weights", default="imagenet", help="'imagenet' downloads; 'none' is random")
    args = parser.parse_args(argv)

    import keras

    weights = None if args.weights == "none" else args.weights
    model = keras.applications.InceptionV3(weights=weights, include_top=False)
    save_weights_archive(args.out, keras_to_tensors(model))
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
