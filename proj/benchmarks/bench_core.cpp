// Microbenchmarks for the hot paths: the distillation convs, one ACB step,
// preprocessing, and a full training batch at desk scale.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "cabcnn/acb.hpp"
#include "cabcnn/audio.hpp"
#include "cabcnn/layers.hpp"
#include "cabcnn/model.hpp"
#include "cabcnn/rng.hpp"
#include "cabcnn/training.hpp"

namespace {

cabcnn::Tensor random_signal(std::int64_t len, std::uint64_t seed) {
    cabcnn::Rng rng(seed);
    cabcnn::Tensor x({1, len});
    for (double& v : x.data) {
        v = rng.normal();
    }
    return x;
}

void BM_ConvForward(benchmark::State& state) {
    const std::int64_t len = state.range(0);
    cabcnn::Rng rng(1);
    cabcnn::Conv1D conv(1, 16, 4);
    conv.init(rng);
    const cabcnn::Tensor x = random_signal(len, 2);
    for (auto _ : state) {
        cabcnn::Conv1D::Ctx ctx;
        benchmark::DoNotOptimize(conv.forward(x, &ctx));
    }
    state.SetItemsProcessed(state.iterations() * len);
}
BENCHMARK(BM_ConvForward)->Arg(4000)->Arg(120000);

void BM_AcbStep(benchmark::State& state) {
    cabcnn::Rng rng(3);
    cabcnn::ACB acb(128, 40, 3);
    acb.init(rng);
    cabcnn::Tensor f({128});
    for (double& v : f.data) {
        v = rng.normal();
    }
    for (auto _ : state) {
        cabcnn::ACB::StepCtx ctx;
        benchmark::DoNotOptimize(acb.forward(f, &ctx));
    }
}
BENCHMARK(BM_AcbStep);

void BM_Preprocess(benchmark::State& state) {
    cabcnn::Rng rng(4);
    cabcnn::AudioClip clip;
    clip.sample_rate = 44100;
    clip.samples.resize(44100 * 5);
    for (double& v : clip.samples) {
        v = rng.normal();
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(cabcnn::preprocess(clip, 30));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(clip.samples.size()));
}
BENCHMARK(BM_Preprocess);

void BM_TrainBatch(benchmark::State& state) {
    cabcnn::ModelConfig mc;
    mc.conv_stages = {{4, 4, 4, 2, 0.15}, {6, 4, 4, 2, 0.15}, {8, 10, 10, 5, 0.1},
                      {12, 10, 10, 5, 0.0}};
    mc.feature_dim = 12;
    mc.n_classifiers = 4;
    mc.n_classes = 3;
    mc.seed = 5;
    cabcnn::Model model = cabcnn::Model::build(mc);

    std::vector<cabcnn::Sample> train_set;
    cabcnn::Rng rng(6);
    for (int i = 0; i < 8; ++i) {
        cabcnn::Sample s;
        s.array = random_signal(800, rng.next_u64());
        s.label = i % 3;
        s.id = "bench" + std::to_string(i);
        train_set.push_back(std::move(s));
    }
    cabcnn::TrainConfig tc;
    tc.batch_size = 8;
    cabcnn::Adam adam(model.parameters(), tc.lr, tc.beta1, tc.beta2, tc.epsilon);
    const std::vector<cabcnn::Batch> batches = cabcnn::make_batches(train_set, tc.batch_size, 7);
    cabcnn::Rng drop_rng(8);
    std::vector<std::uint64_t> drop_seeds;
    for (std::size_t i = 0; i < batches[0].inputs.size(); ++i) {
        drop_seeds.push_back(drop_rng.next_u64());
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(cabcnn::train_step(model, batches[0], adam, drop_seeds));
    }
    state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_TrainBatch);

}  // namespace

BENCHMARK_MAIN();
