// Renders one phantom in both modalities plus a few Shuffle Remaps of modality A.
#include <iostream>

#include "imse/io.hpp"
#include "imse/phantom_data.hpp"
#include "imse/shuffle_remap.hpp"

int main(int argc, char **argv) {
    const std::filesystem::path out = argc > 1 ? argv[1] : "remap_demo_out";
    imse::seed_stream rng(7);
    const auto p = imse::generate_phantom(rng, 128, 5);
    const auto a = imse::simulate_modality(p, imse::modality_a(), rng);
    imse::io::write_pgm(out / "modality_a.pgm", a, 255);
    imse::io::write_pgm(out / "modality_b.pgm", imse::simulate_modality(p, imse::modality_b(), rng), 255);
    for (int n : {2, 5, 20, 50}) {
        const auto spec = imse::sample_remap(rng, n, n);
        imse::io::write_pgm(out / ("remap_n" + std::to_string(n) + ".pgm"), imse::apply_remap(a, spec), 255);
    }
    std::cout << "wrote " << out.string() << "\n";
}
