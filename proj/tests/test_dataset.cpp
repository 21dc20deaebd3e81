#include <doctest.h>

#include <cmath>
#include <fstream>

#include "test_helpers.hpp"
#include "tsprobe/dataset.hpp"
#include "tsprobe/errors.hpp"
#include "tsprobe/util.hpp"

using namespace tsprobe;
using tsprobe::testing::TempDir;

namespace {

dataset::SourceTable tiny_table(dataset::Split split, int n, int channels, int length,
                                int num_classes) {
    dataset::SourceTable t;
    t.split = split;
    for (int i = 0; i < n; ++i) {
        std::vector<float> row(static_cast<size_t>(channels) * length);
        for (size_t j = 0; j < row.size(); ++j)
            row[j] = static_cast<float>(i) + 0.25f * static_cast<float>(j);
        t.sequences.push_back(std::move(row));
        t.lengths.push_back(length);
        t.labels.push_back(1 + i % num_classes);
    }
    return t;
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("ingest echoes declared shapes in the manifest") {
    TempDir tmp;
    dataset::DatasetStore store(tmp.path);
    auto meta = testing::toy_meta("tiny", 2, 8);
    auto manifest = store.ingest({tiny_table(dataset::Split::train, 4, 1, 8, 2)}, meta);
    CHECK(manifest.shapes.at("train").num_samples == 4);
    CHECK(manifest.shapes.at("train").num_channels == 1);
    CHECK(manifest.shapes.at("train").length == 8);
    CHECK(manifest.class_names.size() == 2);
}

TEST_CASE("emg-shaped ingest matches the published summary row") {
    // 267 train / 47 test, V=1, T=1500, C=3
    TempDir tmp;
    dataset::DatasetStore store(tmp.path);
    auto meta = testing::toy_meta("emg", 3, 1500);
    auto manifest = store.ingest({tiny_table(dataset::Split::train, 267, 1, 1500, 3),
                                  tiny_table(dataset::Split::test, 47, 1, 1500, 3)},
                                 meta);
    CHECK(manifest.shapes.at("train").num_samples == 267);
    CHECK(manifest.shapes.at("test").num_samples == 47);
    CHECK(manifest.shapes.at("train").length == 1500);
    CHECK(manifest.class_names.size() == 3);
}

TEST_CASE("round trip is the identity on tensor bytes and labels") {
    TempDir tmp;
    dataset::DatasetStore store(tmp.path);
    auto meta = testing::toy_meta("rt", 2, 16, 2);
    auto table = tiny_table(dataset::Split::train, 6, 2, 16, 2);
    store.ingest({table}, meta);
    auto loaded = store.load_split("rt", dataset::Split::train);
    REQUIRE(loaded.num_samples == 6);
    for (int i = 0; i < 6; ++i) {
        auto got = loaded.sample_copy(i);
        CHECK(got == table.sequences[static_cast<size_t>(i)]);
        CHECK(loaded.y[static_cast<size_t>(i)] == table.labels[static_cast<size_t>(i)]);
    }
    // re-ingest of identical input yields identical checksums
    auto again = store.ingest({table}, meta);
    CHECK(again.checksums == store.manifest("rt").checksums);
}

TEST_CASE("train and test sample ids are disjoint") {
    TempDir tmp;
    dataset::DatasetStore store(tmp.path);
    testing::make_toy_dataset(store, "dj", 5, 5, 2, 8);
    auto train = store.load_split("dj", dataset::Split::train);
    auto test = store.load_split("dj", dataset::Split::test);
    for (const auto& id : train.sample_ids)
        CHECK(std::find(test.sample_ids.begin(), test.sample_ids.end(), id) ==
              test.sample_ids.end());
}

TEST_CASE("tampered tensor file fails the checksum gate") {
    TempDir tmp;
    dataset::DatasetStore store(tmp.path);
    testing::make_toy_dataset(store, "tam", 4, 4, 2, 8);
    auto blob = tmp.path / "tam" / "test.f32";
    {
        std::fstream f(blob, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(5);
        char junk = 0x5a;
        f.write(&junk, 1);
    }
    CHECK_THROWS_AS(store.load_split("tam", dataset::Split::test), CorruptStoreError);
    // train split untouched
    CHECK_NOTHROW(store.load_split("tam", dataset::Split::train));
}

TEST_CASE("unknown id raises NotFoundError") {
    TempDir tmp;
    dataset::DatasetStore store(tmp.path);
    CHECK_THROWS_AS(store.load_split("xyz", dataset::Split::train), NotFoundError);
    CHECK_THROWS_AS(store.describe("xyz"), NotFoundError);
}

TEST_CASE("nan policy: reject throws, fills repair") {
    TempDir tmp;
    dataset::DatasetStore store(tmp.path);
    auto table = tiny_table(dataset::Split::train, 2, 1, 4, 2);
    table.sequences[0][2] = std::nanf("");

    auto meta = testing::toy_meta("nan1", 2, 4);
    CHECK_THROWS_AS(store.ingest({table}, meta), IngestValueError);

    meta.id = "nan2";
    meta.nan_policy = dataset::NanPolicy::forward_fill;
    store.ingest({table}, meta);
    auto d2 = store.load_split("nan2", dataset::Split::train);
    CHECK(d2.sample(0)[2] == d2.sample(0)[1]);

    meta.id = "nan3";
    meta.nan_policy = dataset::NanPolicy::zero_fill;
    store.ingest({table}, meta);
    CHECK(store.load_split("nan3", dataset::Split::train).sample(0)[2] == 0.0f);

    // inf is rejected under every policy
    table.sequences[0][2] = INFINITY;
    meta.id = "nan4";
    CHECK_THROWS_AS(store.ingest({table}, meta), IngestValueError);
}

TEST_CASE("ragged series pad right with the final observed value") {
    TempDir tmp;
    dataset::DatasetStore store(tmp.path);
    dataset::SourceTable t;
    t.split = dataset::Split::train;
    t.sequences = {{1.0f, 2.0f, 3.0f}, {5.0f, 6.0f, 7.0f, 8.0f, 9.0f}};
    t.lengths = {3, 5};
    t.labels = {1, 2};
    auto meta = testing::toy_meta("rag", 2, 5);
    auto manifest = store.ingest({t}, meta);
    CHECK(manifest.padded_samples == 1);
    auto d = store.load_split("rag", dataset::Split::train);
    CHECK(d.sample(0)[3] == 3.0f);
    CHECK(d.sample(0)[4] == 3.0f);
    CHECK(d.sample(1)[4] == 9.0f);
}

TEST_CASE("ingest rejects bad shapes and labels") {
    TempDir tmp;
    dataset::DatasetStore store(tmp.path);
    auto meta = testing::toy_meta("bad", 2, 4);

    auto too_long = tiny_table(dataset::Split::train, 1, 1, 6, 2);
    CHECK_THROWS_AS(store.ingest({too_long}, meta), IngestShapeError);

    auto bad_label = tiny_table(dataset::Split::train, 2, 1, 4, 2);
    bad_label.labels[1] = 9;
    CHECK_THROWS_AS(store.ingest({bad_label}, meta), IngestLabelError);
}

TEST_CASE("describe reports class balance that sums to N") {
    TempDir tmp;
    dataset::DatasetStore store(tmp.path);
    testing::make_toy_dataset(store, "bal", 5, 3, 2, 8);
    auto desc = store.describe("bal");
    int total = 0;
    for (const auto& [cls, count] : desc.class_balance.at("train")) total += count;
    CHECK(total == 10);
    CHECK(desc.class_balance.at("train").at(1) == 5);
    CHECK(desc.class_balance.at("train").at(2) == 5);

    // independent histogram agrees
    auto train = store.load_split("bal", dataset::Split::train);
    std::map<int, int> hist;
    for (int y : train.y) ++hist[y];
    CHECK(hist == desc.class_balance.at("train"));
}

TEST_CASE("csv ingestion maps class names and 1-based indices") {
    TempDir tmp;
    auto csv = tmp.path / "train.csv";
    util::atomic_write(csv, std::string("label,v1,v2\nup,1.0,2.0\n2,3.0,4.0\n"));
    auto meta = testing::toy_meta("csv", 2, 2);
    meta.class_names = {"up", "down"};
    auto table = dataset::read_source_csv(csv, meta, dataset::Split::train);
    REQUIRE(table.labels.size() == 2);
    CHECK(table.labels[0] == 1);
    CHECK(table.labels[1] == 2);

    util::atomic_write(csv, std::string("sideways,1.0,2.0\n"));
    CHECK_THROWS_AS(dataset::read_source_csv(csv, meta, dataset::Split::train),
                    IngestLabelError);
}

}  // TEST_SUITE
