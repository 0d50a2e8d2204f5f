#include <algorithm>
#include <filesystem>
#include <fstream>

#include <catch2/catch_amalgamated.hpp>

#include "cdtl/synthetic.hpp"

using namespace cdtl;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

// best threshold-on-mean-intensity classifier, the separability oracle
double threshold_accuracy(const Dataset& dataset) {
    struct Item {
        double mean;
        Label label;
    };
    std::vector<Item> items;
    for (const auto& it : dataset.items) {
        double sum = 0.0;
        for (float v : it.image.data()) sum += v;
        items.push_back({sum / static_cast<double>(it.image.size()), it.label});
    }
    std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.mean < b.mean; });

    std::size_t best = 0;
    for (std::size_t cut = 0; cut <= items.size(); ++cut) {
        // classify the first `cut` (darkest) as defect, rest as noDefect
        std::size_t correct = 0;
        for (std::size_t i = 0; i < items.size(); ++i) {
            const Label predicted = i < cut ? Label::defect : Label::noDefect;
            if (predicted == items[i].label) ++correct;
        }
        best = std::max(best, correct);
    }
    return static_cast<double>(best) / static_cast<double>(items.size());
}

}  // namespace

TEST_CASE("generation is deterministic per seed", "[synthetic]") {
    SyntheticSpec spec;
    spec.counts = {5, 5, 5, 5};
    const GeneratedPair a = generate_pair(spec, 42);
    const GeneratedPair b = generate_pair(spec, 42);
    REQUIRE(a.source.size() == b.source.size());
    for (std::size_t i = 0; i < a.source.size(); ++i) {
        REQUIRE(a.source.items[i].image.data() == b.source.items[i].image.data());
    }
    const GeneratedPair c = generate_pair(spec, 43);
    CHECK(a.source.items[0].image.data() != c.source.items[0].image.data());
}

TEST_CASE("pixels stay inside [0,1] at 8-bit levels", "[synthetic]") {
    SyntheticSpec spec;
    spec.counts = {10, 10, 10, 10};
    const GeneratedPair pair = generate_pair(spec, 7);
    for (const Dataset* d : {&pair.source, &pair.target}) {
        for (const auto& item : d->items) {
            for (float v : item.image.data()) {
                REQUIRE(v >= 0.0f);
                REQUIRE(v <= 1.0f);
                const float scaled = v * 255.0f;
                REQUIRE(std::abs(scaled - std::round(scaled)) < 1e-4f);
            }
        }
    }
}

TEST_CASE("zero blob count degenerates defect images to their paired backgrounds",
          "[synthetic]") {
    SyntheticSpec spec;
    spec.counts = {6, 6, 6, 6};
    spec.defect.blob_count_min = 0;
    spec.defect.blob_count_max = 0;
    const GeneratedPair pair = generate_pair(spec, 9);
    for (const Dataset* d : {&pair.source, &pair.target}) {
        const auto defects = d->images_with(Label::defect);
        const auto clean = d->images_with(Label::noDefect);
        for (std::size_t i = 0; i < defects.size(); ++i) {
            REQUIRE(defects[i].data() == clean[i].data());
        }
    }
}

TEST_CASE("noise-free stripes follow the closed-form structure", "[synthetic]") {
    DomainSpec spec;
    spec.background = BackgroundKind::stripes;
    spec.orientation_deg = 0.0;
    spec.scale = 8.0;
    spec.contrast = 0.2;
    spec.base_intensity = 0.5;
    spec.noise_sigma = 0.0;
    DefectSpec defect;
    const GeneratedPair pair =
        generate_pair(spec, spec, defect, PairCounts{1, 3, 1, 1}, 11);

    for (const Tensor& img : pair.source.images_with(Label::noDefect)) {
        // orientation 0: constant along x, periodic in y with the stripe period
        for (std::size_t y = 0; y < 32; ++y) {
            for (std::size_t x = 1; x < 32; ++x) {
                REQUIRE(img.at(y, x, 0) == img.at(y, 0, 0));
            }
        }
        for (std::size_t y = 0; y + 8 < 32; ++y) {
            REQUIRE(std::abs(img.at(y, 0, 0) - img.at(y + 8, 0, 0)) <= 1.0f / 255.0f + 1e-6f);
        }
        for (float v : img.data()) {
            REQUIRE(v >= 0.3f - 1e-6f);
            REQUIRE(v <= 0.7f + 1e-6f);
        }
    }
}

TEST_CASE("domain shift dominates the class signal on default specs", "[synthetic]") {
    SyntheticSpec spec;  // defaults: 300 per class per domain
    const GeneratedPair pair = generate_pair(spec, 101);

    const Tensor source_clean = mean_image(pair.source.images_with(Label::noDefect));
    const Tensor target_clean = mean_image(pair.target.images_with(Label::noDefect));
    const Tensor source_defect = mean_image(pair.source.images_with(Label::defect));
    const Tensor target_defect = mean_image(pair.target.images_with(Label::defect));

    const double domain_gap = mean_abs_diff(source_clean, target_clean);
    const double class_gap_source = mean_abs_diff(source_clean, source_defect);
    const double class_gap_target = mean_abs_diff(target_clean, target_defect);

    INFO("domain gap " << domain_gap << ", class gaps " << class_gap_source << " / "
                       << class_gap_target);
    CHECK(domain_gap > class_gap_source);
    CHECK(domain_gap > class_gap_target);
}

TEST_CASE("a threshold-on-mean classifier separates classes within each domain", "[synthetic]") {
    SyntheticSpec spec;
    const GeneratedPair pair = generate_pair(spec, 102);
    const double source_acc = threshold_accuracy(pair.source);
    const double target_acc = threshold_accuracy(pair.target);
    INFO("threshold accuracy source " << source_acc << ", target " << target_acc);
    CHECK(source_acc > 0.9);
    CHECK(target_acc > 0.9);
}

TEST_CASE("blobs that cannot fit are rejected", "[synthetic]") {
    SyntheticSpec spec;
    spec.defect.radius_min = 12.0;
    spec.defect.radius_max = 14.0;  // worst margin ~ 18 > 32/2
    CHECK_THROWS_AS(generate_pair(spec, 1), ConfigError);

    SyntheticSpec bad_sigma;
    bad_sigma.source.noise_sigma = 0.7;
    CHECK_THROWS_AS(generate_pair(bad_sigma, 1), ConfigError);
}

TEST_CASE("split is stratified, disjoint, and deterministic", "[synthetic][dataset]") {
    SyntheticSpec spec;
    spec.counts = {10, 10, 10, 10};
    const Dataset source = generate_pair(spec, 20).source;

    const SplitResult r = split(source, 0.5, 3);
    CHECK(r.train.count(Label::defect) == 5);
    CHECK(r.train.count(Label::noDefect) == 5);
    CHECK(r.test.count(Label::defect) == 5);
    CHECK(r.test.count(Label::noDefect) == 5);

    // union of parts is the original multiset (by filename)
    std::vector<std::string> names;
    for (const auto& it : r.train.items) names.push_back(it.filename);
    for (const auto& it : r.test.items) names.push_back(it.filename);
    std::vector<std::string> original;
    for (const auto& it : source.items) original.push_back(it.filename);
    std::sort(names.begin(), names.end());
    std::sort(original.begin(), original.end());
    CHECK(names == original);

    const SplitResult r2 = split(source, 0.5, 3);
    CHECK(r2.train.items[0].filename == r.train.items[0].filename);

    // stratification holds for skewed class sizes
    SyntheticSpec skewed;
    skewed.counts = {100, 10, 5, 5};
    const Dataset skewed_source = generate_pair(skewed, 21).source;
    const SplitResult rs = split(skewed_source, 0.8, 4);
    CHECK(rs.train.count(Label::defect) == 80);
    CHECK(rs.train.count(Label::noDefect) == 8);
    CHECK(rs.test.count(Label::defect) == 20);
    CHECK(rs.test.count(Label::noDefect) == 2);
}

TEST_CASE("splits that empty a class partition are errors", "[synthetic][dataset]") {
    SyntheticSpec spec;
    spec.counts = {2, 2, 2, 2};
    const Dataset source = generate_pair(spec, 22).source;
    CHECK_THROWS_AS(split(source, 0.05, 1), InputError);
    CHECK_THROWS_AS(split(source, 0.99, 1), InputError);
    CHECK_THROWS_AS(split(source, 1.5, 1), InputError);
}

TEST_CASE("dataset directory round-trip is pixel exact", "[dataset]") {
    TempDir dir("cdtl_test_dataset");
    SyntheticSpec spec;
    spec.counts = {3, 3, 3, 3};
    const Dataset source = generate_pair(spec, 23).source;
    write_dataset(source, dir.path.string());
    const Dataset loaded = read_dataset(dir.path.string());

    REQUIRE(loaded.size() == source.size());
    for (std::size_t i = 0; i < source.size(); ++i) {
        CHECK(loaded.items[i].image.data() == source.items[i].image.data());
        CHECK(loaded.items[i].label == source.items[i].label);
        CHECK(loaded.items[i].domain == source.items[i].domain);
        CHECK(loaded.items[i].filename == source.items[i].filename);
    }
}

TEST_CASE("manifest errors are reported with their row", "[dataset]") {
    TempDir dir("cdtl_test_manifest");

    SECTION("missing image file") {
        SyntheticSpec spec;
        spec.counts = {2, 2, 2, 2};
        const Dataset source = generate_pair(spec, 24).source;
        write_dataset(source, dir.path.string());
        fs::remove(dir.path / source.items[1].filename);
        try {
            read_dataset(dir.path.string());
            FAIL("expected DatasetError");
        } catch (const DatasetError& e) {
            const std::string msg = e.what();
            CHECK(msg.find(source.items[1].filename) != std::string::npos);
            CHECK(msg.find("row 3") != std::string::npos);  // header + 2 rows
        }
    }

    SECTION("empty manifest") {
        std::ofstream(dir.path / "manifest.csv") << "filename,label,domain\n";
        CHECK_THROWS_AS(read_dataset(dir.path.string()), DatasetError);
    }

    SECTION("unknown label token") {
        std::ofstream(dir.path / "manifest.csv")
            << "filename,label,domain\nimg.pgm,banana,source\n";
        try {
            read_dataset(dir.path.string());
            FAIL("expected DatasetError");
        } catch (const DatasetError& e) {
            CHECK(std::string(e.what()).find("banana") != std::string::npos);
        }
    }

    SECTION("bad header") {
        std::ofstream(dir.path / "manifest.csv") << "file,label\n";
        CHECK_THROWS_AS(read_dataset(dir.path.string()), DatasetError);
    }
}

TEST_CASE("pgm files round-trip and reject malformed headers", "[dataset]") {
    TempDir dir("cdtl_test_pgm");
    const auto path = (dir.path / "img.pgm").string();

    Rng rng(55);
    Tensor img({5, 7, 1});
    for (std::size_t i = 0; i < img.size(); ++i) {
        img[i] = static_cast<float>(rng.below(256)) / 255.0f;
    }
    write_pgm(path, img);
    const Tensor loaded = read_pgm(path);
    REQUIRE(loaded.shape() == img.shape());
    CHECK(loaded.data() == img.data());

    // comments in the header are skipped
    {
        std::ofstream out(dir.path / "comment.pgm", std::ios::binary);
        out << "P5\n# a comment\n2 2\n255\n";
        out.write("\x01\x02\x03\x04", 4);
    }
    const Tensor commented = read_pgm((dir.path / "comment.pgm").string());
    CHECK(commented.extent(0) == 2);
    CHECK(commented.at(1, 1, 0) == Catch::Approx(4.0f / 255.0f));

    {
        std::ofstream out(dir.path / "bad_magic.pgm", std::ios::binary);
        out << "P6\n2 2\n255\n....";
    }
    CHECK_THROWS_AS(read_pgm((dir.path / "bad_magic.pgm").string()), DatasetError);

    {
        std::ofstream out(dir.path / "bad_maxval.pgm", std::ios::binary);
        out << "P5\n2 2\n127\n....";
    }
    CHECK_THROWS_AS(read_pgm((dir.path / "bad_maxval.pgm").string()), DatasetError);

    {
        std::ofstream out(dir.path / "truncated.pgm", std::ios::binary);
        out << "P5\n4 4\n255\n..";
    }
    CHECK_THROWS_AS(read_pgm((dir.path / "truncated.pgm").string()), DatasetError);

    CHECK_THROWS_AS(read_pgm((dir.path / "absent.pgm").string()), DatasetError);
}
