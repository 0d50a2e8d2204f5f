#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cdtl/bytes.hpp"
#include "cdtl/dataset.hpp"
#include "cdtl/distance.hpp"
#include "cdtl/encoder.hpp"
#include "cdtl/error.hpp"

namespace cdtl {

// Reference-image inference: a query embedding is compared against a bank of
// positive (non-defective) and negative (defective) reference embeddings; the
// class is the side with the smaller mean distance.

struct ReferenceBank {
    std::vector<Embedding> positive_embeddings;
    std::vector<Embedding> negative_embeddings;
    Digest fingerprint{};  // of the encoder checkpoint the bank was built with
};

struct Verdict {
    Label label = Label::defect;
    double mean_d_pos = 0.0;
    double mean_d_neg = 0.0;
};

inline ReferenceBank build_bank(const EncoderModel& model, const std::vector<Tensor>& positives,
                                const std::vector<Tensor>& negatives) {
    if (positives.empty() || negatives.empty()) {
        throw InputError("build_bank: reference lists must be nonempty");
    }
    ReferenceBank bank;
    bank.positive_embeddings.reserve(positives.size());
    bank.negative_embeddings.reserve(negatives.size());
    for (const Tensor& img : positives) bank.positive_embeddings.push_back(embed(model, img));
    for (const Tensor& img : negatives) bank.negative_embeddings.push_back(embed(model, img));
    bank.fingerprint = model_fingerprint(model);
    return bank;
}

// Distance averaging happens over the individual reference distances, not
// against a mean embedding; the two rules differ.
inline Verdict classify_embedding(const ReferenceBank& bank, const Embedding& query) {
    if (bank.positive_embeddings.empty() || bank.negative_embeddings.empty()) {
        throw InputError("classify: reference bank is empty");
    }
    Verdict v;
    double sum = 0.0;
    for (const Embedding& ref : bank.positive_embeddings) sum += euclidean_distance(query, ref);
    v.mean_d_pos = sum / static_cast<double>(bank.positive_embeddings.size());
    sum = 0.0;
    for (const Embedding& ref : bank.negative_embeddings) sum += euclidean_distance(query, ref);
    v.mean_d_neg = sum / static_cast<double>(bank.negative_embeddings.size());
    // Tie goes to defect: a false alarm is cheaper than a missed defect.
    v.label = v.mean_d_pos < v.mean_d_neg ? Label::noDefect : Label::defect;
    return v;
}

inline Verdict classify(const EncoderModel& model, const ReferenceBank& bank, const Tensor& image) {
    if (model_fingerprint(model) != bank.fingerprint) {
        throw StaleBankError("classify: bank was built with a different encoder checkpoint");
    }
    return classify_embedding(bank, embed(model, image));
}

// Convention throughout: the noDefect class is "Positive".
//   tp  true noDefect predicted noDefect    fn  true noDefect predicted defect
//   tn  true defect   predicted defect      fp  true defect   predicted noDefect
struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;
    std::size_t fp = 0;

    std::size_t total() const { return tp + fn + tn + fp; }

    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

inline ConfusionCounts classify_batch(const EncoderModel& model, const ReferenceBank& bank,
                                      const std::vector<Tensor>& images,
                                      const std::vector<Label>& labels) {
    if (images.empty() || images.size() != labels.size()) {
        throw InputError("classify_batch: need equally many images and labels, at least one");
    }
    if (model_fingerprint(model) != bank.fingerprint) {
        throw StaleBankError("classify_batch: bank was built with a different encoder checkpoint");
    }
    ConfusionCounts counts;
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (labels[i] != Label::defect && labels[i] != Label::noDefect) {
            throw InputError("classify_batch: unknown label value at index " + std::to_string(i));
        }
        const Verdict v = classify_embedding(bank, embed(model, images[i]));
        if (labels[i] == Label::noDefect) {
            (v.label == Label::noDefect ? counts.tp : counts.fn) += 1;
        } else {
            (v.label == Label::defect ? counts.tn : counts.fp) += 1;
        }
    }
    return counts;
}

// --- bank persistence --------------------------------------------------------
//
// Layout: magic "CDRB", u32 LE version (1), u32 LE embedding length D,
// u32 LE positive count, positives as f32 LE, u32 LE negative count,
// negatives as f32 LE, 32-byte model fingerprint.

inline constexpr char kBankMagic[4] = {'C', 'D', 'R', 'B'};
inline constexpr std::uint32_t kBankVersion = 1;

inline std::vector<std::uint8_t> serialize_bank(const ReferenceBank& bank) {
    if (bank.positive_embeddings.empty() || bank.negative_embeddings.empty()) {
        throw InputError("serialize_bank: reference lists must be nonempty");
    }
    const std::size_t dim = bank.positive_embeddings.front().size();
    ByteWriter w;
    w.bytes(kBankMagic, 4);
    w.u32(kBankVersion);
    w.u32(static_cast<std::uint32_t>(dim));
    w.u32(static_cast<std::uint32_t>(bank.positive_embeddings.size()));
    for (const Embedding& e : bank.positive_embeddings) {
        if (e.size() != dim) throw ShapeError("serialize_bank: embedding length mismatch");
        for (float v : e.data()) w.f32(v);
    }
    w.u32(static_cast<std::uint32_t>(bank.negative_embeddings.size()));
    for (const Embedding& e : bank.negative_embeddings) {
        if (e.size() != dim) throw ShapeError("serialize_bank: embedding length mismatch");
        for (float v : e.data()) w.f32(v);
    }
    w.bytes(bank.fingerprint.data(), bank.fingerprint.size());
    return w.buffer();
}

inline void save_bank(const ReferenceBank& bank, const std::string& path) {
    write_file(path, serialize_bank(bank));
}

inline ReferenceBank deserialize_bank(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes, "bank");
    const std::string magic = r.text(4, "magic");
    if (magic != std::string(kBankMagic, 4)) {
        throw FormatError("bank magic: expected \"CDRB\", got \"" + magic + "\"");
    }
    const std::uint32_t version = r.u32("version");
    if (version != kBankVersion) {
        throw FormatError("bank version: expected 1, got " + std::to_string(version));
    }
    const std::uint32_t dim = r.u32("embedding length");
    if (dim == 0) throw FormatError("bank embedding length: must be positive");

    ReferenceBank bank;
    for (auto* list : {&bank.positive_embeddings, &bank.negative_embeddings}) {
        const bool positive = list == &bank.positive_embeddings;
        const std::string side = positive ? "positive" : "negative";
        const std::uint32_t count = r.u32(side + " count");
        if (count == 0) throw FormatError("bank " + side + " count: must be positive");
        list->reserve(count);
        for (std::uint32_t i = 0; i < count; ++i) {
            Tensor e({dim});
            for (std::uint32_t k = 0; k < dim; ++k) {
                e[k] = r.f32(side + " embedding " + std::to_string(i));
            }
            list->push_back(std::move(e));
        }
    }
    r.raw(bank.fingerprint.data(), bank.fingerprint.size(), "fingerprint");
    r.expect_end();
    return bank;
}

inline ReferenceBank load_bank(const std::string& path) {
    return deserialize_bank(read_file(path));
}

}  // namespace cdtl
