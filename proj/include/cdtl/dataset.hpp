#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cdtl/error.hpp"
#include "cdtl/rng.hpp"
#include "cdtl/tensor.hpp"

namespace cdtl {

enum class Label { defect, noDefect };
enum class Domain { source, target };

inline const char* to_string(Label l) { return l == Label::defect ? "defect" : "noDefect"; }
inline const char* to_string(Domain d) { return d == Domain::source ? "source" : "target"; }

inline Label label_from_string(const std::string& s) {
    if (s == "defect") return Label::defect;
    if (s == "noDefect") return Label::noDefect;
    throw DatasetError("unknown label token '" + s + "'");
}

inline Domain domain_from_string(const std::string& s) {
    if (s == "source") return Domain::source;
    if (s == "target") return Domain::target;
    throw DatasetError("unknown domain token '" + s + "'");
}

struct LabeledImage {
    Tensor image;  // h x w x 1, values in [0,1] quantized to 8-bit levels
    Label label = Label::noDefect;
    Domain domain = Domain::source;
    std::string filename;
};

struct Dataset {
    std::vector<LabeledImage> items;

    std::size_t size() const { return items.size(); }
    bool empty() const { return items.empty(); }

    std::size_t count(Label label) const {
        std::size_t n = 0;
        for (const auto& it : items) {
            if (it.label == label) ++n;
        }
        return n;
    }

    // Images of one class, in dataset order.
    std::vector<Tensor> images_with(Label label) const {
        std::vector<Tensor> out;
        for (const auto& it : items) {
            if (it.label == label) out.push_back(it.image);
        }
        return out;
    }
};

// --- PGM (binary P5, maxval 255) --------------------------------------------

inline void write_pgm(const std::string& path, const Tensor& image) {
    image.require_rank(3, "write_pgm");
    if (image.extent(2) != 1) {
        throw DatasetError("write_pgm: only single-channel images supported, got " +
                           image.shape_string());
    }
    const std::size_t h = image.extent(0), w = image.extent(1);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DatasetError("cannot open '" + path + "' for writing");
    out << "P5\n" << w << " " << h << "\n255\n";
    std::vector<std::uint8_t> row(w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const float v = std::clamp(image.at(y, x, 0), 0.0f, 1.0f);
            row[x] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
        }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(w));
    }
    if (!out) throw DatasetError("failed while writing '" + path + "'");
}

namespace detail {

inline unsigned pgm_header_value(std::istream& in, const std::string& path, const char* what) {
    // Skips whitespace and '#' comment lines between header tokens.
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    if (c == EOF || !std::isdigit(c)) {
        throw DatasetError("'" + path + "': malformed PGM header (" + what + ")");
    }
    unsigned value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + static_cast<unsigned>(c - '0');
        c = in.get();
    }
    if (c != EOF) in.unget();
    return value;
}

}  // namespace detail

inline Tensor read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open '" + path + "' for reading");
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (!in || m0 != 'P' || m1 != '5') {
        throw DatasetError("'" + path + "': not a binary PGM (P5) file");
    }
    const unsigned w = detail::pgm_header_value(in, path, "width");
    const unsigned h = detail::pgm_header_value(in, path, "height");
    const unsigned maxval = detail::pgm_header_value(in, path, "maxval");
    if (maxval != 255) {
        throw DatasetError("'" + path + "': unsupported maxval " + std::to_string(maxval));
    }
    in.get();  // single whitespace byte before pixel data
    if (w == 0 || h == 0) throw DatasetError("'" + path + "': zero image extent");

    std::vector<std::uint8_t> raw(static_cast<std::size_t>(w) * h);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
        throw DatasetError("'" + path + "': truncated pixel data");
    }
    Tensor image({h, w, 1});
    for (std::size_t i = 0; i < raw.size(); ++i) {
        image[i] = static_cast<float>(raw[i]) / 255.0f;
    }
    return image;
}

// --- dataset directory: manifest.csv + PGM files -----------------------------
//
// manifest.csv has the exact header `filename,label,domain`, UTF-8, LF line
// endings; filenames are relative to the directory.

inline void write_dataset(const Dataset& dataset, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream manifest(fs::path(dir) / "manifest.csv", std::ios::binary | std::ios::trunc);
    if (!manifest) throw DatasetError("cannot write manifest in '" + dir + "'");
    manifest << "filename,label,domain\n";
    std::size_t unnamed = 0;
    for (const auto& item : dataset.items) {
        std::string name = item.filename;
        if (name.empty()) {
            std::ostringstream os;
            os << to_string(item.domain) << "_" << to_string(item.label) << "_" << unnamed++
               << ".pgm";
            name = os.str();
        }
        write_pgm((fs::path(dir) / name).string(), item.image);
        manifest << name << "," << to_string(item.label) << "," << to_string(item.domain) << "\n";
    }
    if (!manifest) throw DatasetError("failed while writing manifest in '" + dir + "'");
}

inline Dataset read_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path manifest_path = fs::path(dir) / "manifest.csv";
    std::ifstream manifest(manifest_path, std::ios::binary);
    if (!manifest) throw DatasetError("cannot open manifest '" + manifest_path.string() + "'");

    std::string line;
    if (!std::getline(manifest, line)) {
        throw DatasetError("'" + manifest_path.string() + "': empty manifest");
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "filename,label,domain") {
        throw DatasetError("'" + manifest_path.string() + "': bad header '" + line + "'");
    }

    Dataset dataset;
    std::size_t row = 1;
    while (std::getline(manifest, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos ||
            line.find(',', c2 + 1) != std::string::npos) {
            throw DatasetError("'" + manifest_path.string() + "' row " + std::to_string(row) +
                               ": expected 3 fields");
        }
        LabeledImage item;
        item.filename = line.substr(0, c1);
        try {
            item.label = label_from_string(line.substr(c1 + 1, c2 - c1 - 1));
            item.domain = domain_from_string(line.substr(c2 + 1));
        } catch (const DatasetError& e) {
            throw DatasetError("'" + manifest_path.string() + "' row " + std::to_string(row) +
                               ": " + e.what());
        }
        const fs::path image_path = fs::path(dir) / item.filename;
        if (!fs::exists(image_path)) {
            throw DatasetError("'" + manifest_path.string() + "' row " + std::to_string(row) +
                               ": missing file '" + item.filename + "'");
        }
        item.image = read_pgm(image_path.string());
        dataset.items.push_back(std::move(item));
    }
    if (dataset.empty()) {
        throw DatasetError("'" + manifest_path.string() + "': manifest lists no images");
    }
    return dataset;
}

// --- train/test split --------------------------------------------------------

struct SplitResult {
    Dataset train;
    Dataset test;
};

// Label-stratified split; `train_fraction` of each class (rounded) goes to the
// train part. Deterministic in (dataset order, fraction, seed).
inline SplitResult split(const Dataset& dataset, double train_fraction, std::uint32_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw InputError("split: train fraction must be in (0,1)");
    }
    SplitResult result;
    int label_stream = 0;
    for (Label label : {Label::defect, Label::noDefect}) {
        std::vector<std::size_t> indices;
        for (std::size_t i = 0; i < dataset.items.size(); ++i) {
            if (dataset.items[i].label == label) indices.push_back(i);
        }
        if (indices.empty()) continue;

        Rng rng(mix_seed(seed, 100 + label_stream++));
        for (std::size_t i = indices.size(); i-- > 1;) {
            std::swap(indices[i], indices[rng.below(i + 1)]);
        }
        const auto n_train = static_cast<std::size_t>(
            std::lround(train_fraction * static_cast<double>(indices.size())));
        if (n_train == 0 || n_train == indices.size()) {
            throw InputError("split: fraction " + std::to_string(train_fraction) +
                             " leaves class '" + to_string(label) + "' empty on one side");
        }
        // Keep dataset order inside each part so results do not depend on the
        // shuffle's internal ordering.
        std::sort(indices.begin(), indices.begin() + static_cast<std::ptrdiff_t>(n_train));
        std::sort(indices.begin() + static_cast<std::ptrdiff_t>(n_train), indices.end());
        for (std::size_t i = 0; i < indices.size(); ++i) {
            (i < n_train ? result.train : result.test).items.push_back(dataset.items[indices[i]]);
        }
    }
    if (result.train.empty() || result.test.empty()) {
        throw InputError("split: a part came out empty");
    }
    return result;
}

}  // namespace cdtl
