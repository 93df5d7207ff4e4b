# The two networks, row by row, and what a fresh generator predicts.
from tlfwi import inversion
from tlfwi.nn import generator, unet

for name, net in (("generator", generator((256, 128))), ("U-Net", unet((256, 128)))):
    print(f"{name}: {net.n_params:,} parameters")
    for row in net.table():
        params = " + ".join(map(str, row.params)) or "0"
        print(f"  {row.name:<55} {'x'.join(map(str, row.shape)):<14} {params}")
    print()

# the last-layer initialization keeps a fresh generator close to intact material
for seed in range(3):
    net, noise = inversion.generator_for((128, 64), seed)
    out = net.forward(noise)[0, 0]
    print("seed", seed, "mean", round(out.mean(), 4), "std", f"{out.std():.1e}")
