// Serial vs OpenMP BM25 scoring over a synthetic corpus.
//   ./bench_bm25 --benchmark_filter=Bm25
// Thread count follows OMP_NUM_THREADS.

#include <map>
#include <numeric>
#include <random>

#include <benchmark/benchmark.h>

#include "evf/bm25.hpp"

namespace {

struct Corpus {
    std::vector<std::vector<std::string>> docs;
    std::vector<std::size_t> ids;
    std::vector<std::string> query;
};

const Corpus& corpus(std::size_t n)
{
    static std::map<std::size_t, Corpus> cache;
    auto [it, fresh] = cache.try_emplace(n);
    if (fresh) {
        std::mt19937_64 rng(n);
        auto& c = it->second;
        c.docs.resize(n);
        for (auto& d : c.docs) {
            d.resize(10 + rng() % 30);
            for (auto& w : d) w = "w" + std::to_string(rng() % 5000);
        }
        c.ids.resize(n);
        std::iota(c.ids.begin(), c.ids.end(), std::size_t{0});
        for (int i = 0; i < 8; ++i) c.query.push_back("w" + std::to_string(rng() % 5000));
    }
    return it->second;
}

void BM_Bm25Serial(benchmark::State& state)
{
    const auto& c = corpus(static_cast<std::size_t>(state.range(0)));
    const evf::Bm25Index index(c.docs);
    for (auto _ : state) benchmark::DoNotOptimize(index.score_serial(c.query, c.ids));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_Bm25Parallel(benchmark::State& state)
{
    const auto& c = corpus(static_cast<std::size_t>(state.range(0)));
    const evf::Bm25Index index(c.docs);
    for (auto _ : state) benchmark::DoNotOptimize(index.score(c.query, c.ids));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_Bm25IndexBuild(benchmark::State& state)
{
    const auto& c = corpus(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(evf::Bm25Index(c.docs));
}

}  // namespace

BENCHMARK(BM_Bm25Serial)->Arg(1000)->Arg(10000)->Arg(100000);
BENCHMARK(BM_Bm25Parallel)->Arg(1000)->Arg(10000)->Arg(100000);
BENCHMARK(BM_Bm25IndexBuild)->Arg(10000);

BENCHMARK_MAIN();
