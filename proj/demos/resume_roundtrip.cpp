// Checkpoint round trip: training for 30 updates in one go must match
// training for 18, saving to disk, restoring into fresh objects and running
// the remaining 12. The comparison is bitwise over every parameter, which is
// the property the checkpoint format is designed around, so this demo exits
// nonzero the moment save or restore drops any piece of trainer state.

#include <cstdio>
#include <filesystem>
#include <string>

#include "flowsynth/checkpoint.hpp"
#include "flowsynth/model.hpp"
#include "flowsynth/toydata.hpp"
#include "flowsynth/train.hpp"

using namespace flowsynth;

namespace {

ModelConfig small_model() {
    ModelConfig mc;
    mc.vocab = 6;
    mc.acoustic_dim = 4;
    mc.motion_dim = 3;
    mc.encoder.model_dim = 24;
    mc.encoder.num_blocks = 1;
    mc.encoder.num_heads = 2;
    mc.encoder.head_dim = 6;
    mc.encoder.ffn_mult = 2;
    mc.encoder.dur_hidden = 16;
    mc.unet.down_dims = {12};
    mc.unet.mid_dims = {12};
    mc.unet.up_dims = {12};
    mc.unet.heads = 1;
    mc.unet.head_dim = 6;
    mc.unet.ffn_mult = 2;
    mc.unet.t_emb_dim = 8;
    return mc;
}

}  // namespace

int main() {
    ToyCorpusConfig cc;
    cc.vocab_size = 6;
    cc.acoustic_dim = 4;
    cc.motion_dim = 3;
    cc.n_utterances = 40;
    cc.tokens_min = 3;
    cc.tokens_max = 6;
    cc.seed = 21;
    Rng crng(cc.seed, 10);
    auto corpus = generate_corpus<float>(cc, crng);

    TrainConfig tc;
    tc.batch_size = 4;
    tc.learning_rate = 2e-3;
    tc.log_interval = 10;
    tc.seed = 3;

    // Reference: one uninterrupted run.
    Rng init_a(3, 0);
    Model<float> model_a(init_a, small_model());
    Trainer<float> trainer_a(model_a, tc);
    trainer_a.run(corpus, 30, {});
    std::printf("straight run: 30 updates\n");

    // Interrupted run: train, save, restore, finish.
    Rng init_b(3, 0);
    Model<float> model_b(init_b, small_model());
    Trainer<float> trainer_b(model_b, tc);
    trainer_b.run(corpus, 18, {});
    const auto path = (std::filesystem::temp_directory_path() / "flowsynth_demo_resume.fsck").string();
    write_checkpoint_file(path, snapshot_checkpoint(trainer_b));
    std::printf("saved after 18 updates to %s\n", path.c_str());

    const CheckpointData ckpt = read_checkpoint_file(path);
    Model<float> model_c = model_from_checkpoint<float>(ckpt);
    Trainer<float> trainer_c(model_c, tc);
    restore_trainer(ckpt, trainer_c);
    trainer_c.run(corpus, 12, {});
    std::printf("restored run: 12 more updates (%zu total)\n", trainer_c.update_count());
    std::filesystem::remove(path);

    std::size_t mismatched = 0;
    auto& pa = trainer_a.params();
    auto& pc = trainer_c.params();
    for (std::size_t i = 0; i < pa.size(); ++i)
        if (pa[i].second.data() != pc[i].second.data()) {
            ++mismatched;
            std::printf("  parameter %s differs\n", pa[i].first.c_str());
        }
    if (mismatched == 0) {
        std::printf("all %zu parameter tensors bitwise identical\n", pa.size());
        return 0;
    }
    std::printf("%zu of %zu parameter tensors differ\n", mismatched, pa.size());
    return 1;
}
