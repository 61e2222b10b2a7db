// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0
//
// On-disk formats for the corpus.
//
//   NEGEMB1   "NEGEMB1\n", u32 count, u32 dim, count*dim f32 (all little-endian)
//             with a sibling "<file>.manifest.csv" holding id,polarity,row_index
//   prompts   JSON lines {"id","text","category","polarity"}
//   pairs     CSV image_id,text_id
//   quads     CSV true_image_id,true_prompt_id,distractor_image_id,distractor_prompt_id

#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neglab/corpus/generate.hpp"
#include "neglab/util/binary.hpp"
#include "neglab/util/csv.hpp"

namespace neglab {

namespace fs = std::filesystem;

inline constexpr char kEmbeddingMagic[] = "NEGEMB1\n";

inline fs::path manifest_path(const fs::path& emb_path) {
    auto p = emb_path;
    p += ".manifest.csv";
    return p;
}

inline std::string serialize_embeddings(const std::vector<ImageRecord>& records) {
    require(!records.empty(), "write_embeddings: no records");
    const std::size_t dim = records.front().embedding.size();
    require(dim > 0, "write_embeddings: zero-dimensional embedding");
    std::string out(kEmbeddingMagic, 8);
    bin::put_u32(out, static_cast<std::uint32_t>(records.size()));
    bin::put_u32(out, static_cast<std::uint32_t>(dim));
    for (const auto& r : records) {
        require(r.embedding.size() == dim, "write_embeddings: record '" + r.id + "' has a different dimension");
        for (float v : r.embedding) bin::put_f32(out, v);
    }
    return out;
}

inline std::string serialize_manifest(const std::vector<ImageRecord>& records) {
    std::string out = csv::format_row({"id", "polarity", "row_index"});
    for (std::size_t i = 0; i < records.size(); ++i)
        out += csv::format_row({records[i].id, to_string(records[i].polarity), std::to_string(i)});
    return out;
}

inline void write_embeddings(const std::vector<ImageRecord>& records, const fs::path& path) {
    auto payload = serialize_embeddings(records);
    bin::write_file_atomic(manifest_path(path), serialize_manifest(records));
    bin::write_file_atomic(path, payload);
}

inline std::vector<ImageRecord> parse_embeddings(const std::string& bytes, const std::string& manifest_text) {
    if (bytes.size() < 8 || bytes.compare(0, 8, kEmbeddingMagic, 8) != 0)
        throw FormatError("NEGEMB1: bad magic at byte offset 0");
    if (bytes.size() < 16) throw FormatError("NEGEMB1: truncated header at byte offset " + std::to_string(bytes.size()));
    const std::size_t count = bin::get_u32(bytes, 8);
    const std::size_t dim = bin::get_u32(bytes, 12);
    const std::size_t need = 16 + count * dim * 4;
    if (bytes.size() < need)
        throw FormatError("NEGEMB1: truncated payload at byte offset " + std::to_string(bytes.size()) + " (expected " +
                          std::to_string(need) + " bytes)");
    if (bytes.size() > need)
        throw FormatError("NEGEMB1: " + std::to_string(bytes.size() - need) + " unexpected bytes at byte offset " +
                          std::to_string(need));

    auto rows = csv::parse(manifest_text);
    if (rows.empty() || rows[0] != csv::Row{"id", "polarity", "row_index"})
        throw FormatError("manifest: header must be id,polarity,row_index");
    const std::size_t n_rows = rows.size() - 1;
    if (n_rows != count)
        throw FormatError("manifest: " + std::to_string(n_rows) + " rows but payload holds " + std::to_string(count) +
                          " embeddings (row " + std::to_string(std::min(n_rows, count) + 1) + ")");

    std::vector<ImageRecord> out(count);
    std::vector<bool> seen(count, false);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != 3) throw FormatError("manifest: row " + std::to_string(r) + " does not have 3 fields");
        std::size_t idx = 0;
        try {
            std::size_t used = 0;
            idx = std::stoul(row[2], &used);
            if (used != row[2].size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw FormatError("manifest: row " + std::to_string(r) + " has a non-integer row_index");
        }
        if (idx >= count || seen[idx])
            throw FormatError("manifest: row " + std::to_string(r) + " row_index " + std::to_string(idx) +
                              " is out of range or repeated");
        seen[idx] = true;
        auto& rec = out[idx];
        rec.id = row[0];
        rec.polarity = polarity_from_string(row[1]);
        rec.embedding.resize(dim);
        for (std::size_t k = 0; k < dim; ++k) rec.embedding[k] = bin::get_f32(bytes, 16 + (idx * dim + k) * 4);
    }
    return out;
}

inline std::vector<ImageRecord> read_embeddings(const fs::path& path) {
    return parse_embeddings(bin::read_file(path), bin::read_file(manifest_path(path)));
}

inline nlohmann::ordered_json prompt_to_json(const Prompt& p) {
    nlohmann::ordered_json j;
    j["id"] = p.id;
    j["text"] = p.text;
    j["category"] = to_string(p.category);
    j["polarity"] = to_string(p.polarity);
    return j;
}

inline std::string serialize_prompts(const std::vector<Prompt>& prompts) {
    std::string out;
    for (const auto& p : prompts) out += prompt_to_json(p).dump() + "\n";
    return out;
}

inline std::vector<Prompt> parse_prompts(const std::string& text) {
    std::vector<Prompt> out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            Prompt p{j.at("id").get<std::string>(), j.at("text").get<std::string>(),
                     category_from_string(j.at("category").get<std::string>()),
                     polarity_from_string(j.at("polarity").get<std::string>())};
            p.validate();
            out.push_back(std::move(p));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("prompts: line " + std::to_string(lineno) + ": " + e.what());
        } catch (const ContractViolation& e) {
            throw FormatError("prompts: line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

inline std::vector<Prompt> read_prompts(const fs::path& path) { return parse_prompts(bin::read_file(path)); }

inline void write_prompts(const std::vector<Prompt>& prompts, const fs::path& path) {
    bin::write_file_atomic(path, serialize_prompts(prompts));
}

inline std::string serialize_quadruplets(const std::vector<QuadrupletExample>& quads) {
    std::string out =
        csv::format_row({"true_image_id", "true_prompt_id", "distractor_image_id", "distractor_prompt_id"});
    for (const auto& q : quads)
        out += csv::format_row({q.true_image.id, q.true_prompt.id, q.distractor_image.id, q.distractor_prompt.id});
    return out;
}

/// Resolves every row of a quadruplet CSV and checks polarity opposition.
/// Row numbers in errors count data rows from 1 (the header is row 0).
inline std::vector<QuadrupletExample> parse_quadruplets(const std::string& text,
                                                        const std::map<std::string, ImageRecord>& images,
                                                        const std::map<std::string, Prompt>& prompts) {
    auto rows = csv::parse(text);
    const csv::Row header{"true_image_id", "true_prompt_id", "distractor_image_id", "distractor_prompt_id"};
    if (rows.empty() || rows[0] != header)
        throw FormatError("quadruplets: header must be true_image_id,true_prompt_id,distractor_image_id,distractor_prompt_id");
    std::vector<QuadrupletExample> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != 4) throw ResolutionError(r, "expected 4 fields, found " + std::to_string(row.size()));
        auto image = [&](const std::string& id) -> const ImageRecord& {
            auto it = images.find(id);
            if (it == images.end()) throw ResolutionError(r, "unknown image id '" + id + "'");
            return it->second;
        };
        auto prompt = [&](const std::string& id) -> const Prompt& {
            auto it = prompts.find(id);
            if (it == prompts.end()) throw ResolutionError(r, "unknown prompt id '" + id + "'");
            return it->second;
        };
        QuadrupletExample q{image(row[0]), prompt(row[1]), image(row[2]), prompt(row[3])};
        if (auto why = opposition_violation(q); !why.empty()) throw SemanticOppositionError(r, why);
        out.push_back(std::move(q));
    }
    return out;
}

template <class Seq, class Key>
auto index_by_id(const Seq& items, Key key) {
    std::map<std::string, typename Seq::value_type> m;
    for (const auto& it : items) m.emplace(key(it), it);
    return m;
}

inline std::vector<QuadrupletExample> load_quadruplets(const fs::path& csv_path, const std::vector<ImageRecord>& images,
                                                       const std::vector<Prompt>& prompts) {
    return parse_quadruplets(bin::read_file(csv_path), index_by_id(images, [](const auto& i) { return i.id; }),
                             index_by_id(prompts, [](const auto& p) { return p.id; }));
}

inline std::string serialize_pairs(const std::vector<PairExample>& pairs) {
    std::string out = csv::format_row({"image_id", "text_id"});
    for (const auto& p : pairs) out += csv::format_row({p.image.id, p.text_id});
    return out;
}

inline std::vector<PairExample> parse_pairs(const std::string& text, const std::map<std::string, ImageRecord>& images,
                                            const std::map<std::string, Prompt>& texts) {
    auto rows = csv::parse(text);
    if (rows.empty() || rows[0] != csv::Row{"image_id", "text_id"})
        throw FormatError("pairs: header must be image_id,text_id");
    std::vector<PairExample> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != 2) throw ResolutionError(r, "expected 2 fields");
        auto im = images.find(row[0]);
        if (im == images.end()) throw ResolutionError(r, "unknown image id '" + row[0] + "'");
        auto tx = texts.find(row[1]);
        if (tx == texts.end()) throw ResolutionError(r, "unknown text id '" + row[1] + "'");
        out.push_back(PairExample{im->second, tx->second.id, tx->second.text});
    }
    return out;
}

/// File names inside a corpus directory.
struct CorpusFiles {
    fs::path dir;
    fs::path train() const { return dir / "train.emb"; }
    fs::path test() const { return dir / "test.emb"; }
    fs::path prompts() const { return dir / "prompts.jsonl"; }
    fs::path eval_prompts() const { return dir / "eval_prompts.jsonl"; }
    fs::path captions() const { return dir / "captions.jsonl"; }
    fs::path pairs() const { return dir / "pairs.csv"; }
    fs::path base_pairs() const { return dir / "base_pairs.csv"; }
    fs::path quadruplets() const { return dir / "quadruplets.csv"; }

    std::vector<fs::path> all() const {
        return {train(),   manifest_path(train()), test(),       manifest_path(test()), prompts(),
                eval_prompts(), captions(),        pairs(),      base_pairs(),          quadruplets()};
    }
};

inline void write_corpus(const Corpus& c, const fs::path& dir) {
    CorpusFiles f{dir};
    write_embeddings(c.train_images, f.train());
    write_embeddings(c.test_images, f.test());
    write_prompts(c.prompts, f.prompts());
    write_prompts(c.eval_prompts, f.eval_prompts());
    write_prompts(c.captions, f.captions());
    bin::write_file_atomic(f.pairs(), serialize_pairs(c.pairs));
    bin::write_file_atomic(f.base_pairs(), serialize_pairs(c.base_pairs));
    bin::write_file_atomic(f.quadruplets(), serialize_quadruplets(c.quadruplets));
}

/// Reads a corpus directory. Prototypes are not persisted and stay empty.
/// `quadruplet_csv` overrides the directory's quadruplets.csv when given.
inline Corpus read_corpus(const fs::path& dir, const fs::path& quadruplet_csv = {}) {
    CorpusFiles f{dir};
    Corpus c;
    c.train_images = read_embeddings(f.train());
    c.test_images = read_embeddings(f.test());
    c.prompts = read_prompts(f.prompts());
    c.eval_prompts = read_prompts(f.eval_prompts());
    c.captions = read_prompts(f.captions());
    auto images = index_by_id(c.train_images, [](const auto& i) { return i.id; });
    auto texts = index_by_id(c.prompts, [](const auto& p) { return p.id; });
    for (const auto& cap : c.captions) texts.emplace(cap.id, cap);
    c.pairs = parse_pairs(bin::read_file(f.pairs()), images, texts);
    c.base_pairs = parse_pairs(bin::read_file(f.base_pairs()), images, texts);
    c.quadruplets = load_quadruplets(quadruplet_csv.empty() ? f.quadruplets() : quadruplet_csv, c.train_images,
                                     c.prompts);
    return c;
}

} // namespace neglab
