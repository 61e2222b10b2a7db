// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0
//
// NEGCKPT1 checkpoint files.
//
// Layout:
//   bytes 0..7   "NEGCKPT1"
//   JSON header  compact UTF-8 JSON terminated by a single '\n'
//   payload      little-endian float32 tensors, back to back, in the order of
//                header.tensors; each entry's "offset" is relative to the
//                first payload byte.

#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "neglab/textenc/encoder.hpp"
#include "neglab/util/binary.hpp"

namespace neglab {

inline constexpr char kCheckpointMagic[] = "NEGCKPT1";

struct Provenance {
    std::string objective = "init";
    double learning_rate = 0.0;
    std::size_t epochs = 0;
    double final_loss = 0.0;
    std::string config_hash;
    std::string parent;

    bool operator==(const Provenance&) const = default;
};

struct Checkpoint {
    EncoderConfig config;
    Vocab vocab;
    ParameterSet<float> weights;
    Provenance provenance;

    static Checkpoint fresh(const EncoderConfig& cfg, Vocab vocab) {
        Checkpoint c;
        c.config = cfg;
        c.weights = init_encoder_weights<float>(cfg, vocab.size());
        c.vocab = std::move(vocab);
        return c;
    }

    TokenSequence tokenize(std::string_view text) const {
        return neglab::tokenize(text, vocab, config.context_length);
    }

    bool identical(const Checkpoint& other) const {
        return config == other.config && vocab == other.vocab && provenance == other.provenance &&
               weights.identical(other.weights);
    }
};

inline nlohmann::json to_json(const EncoderConfig& c) {
    return {{"num_layers", c.num_layers},   {"num_heads", c.num_heads}, {"model_width", c.model_width},
            {"context_length", c.context_length}, {"joint_dim", c.joint_dim}, {"causal_mask", c.causal_mask},
            {"init_seed", c.init_seed}};
}

inline EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
    EncoderConfig c;
    c.num_layers = j.at("num_layers").get<std::size_t>();
    c.num_heads = j.at("num_heads").get<std::size_t>();
    c.model_width = j.at("model_width").get<std::size_t>();
    c.context_length = j.at("context_length").get<std::size_t>();
    c.joint_dim = j.at("joint_dim").get<std::size_t>();
    c.causal_mask = j.at("causal_mask").get<bool>();
    c.init_seed = j.at("init_seed").get<std::uint64_t>();
    return c;
}

inline nlohmann::json to_json(const Provenance& p) {
    return {{"objective", p.objective}, {"learning_rate", p.learning_rate}, {"epochs", p.epochs},
            {"final_loss", p.final_loss}, {"config_hash", p.config_hash}, {"parent", p.parent}};
}

inline Provenance provenance_from_json(const nlohmann::json& j) {
    Provenance p;
    p.objective = j.at("objective").get<std::string>();
    p.learning_rate = j.at("learning_rate").get<double>();
    p.epochs = j.at("epochs").get<std::size_t>();
    p.final_loss = j.at("final_loss").get<double>();
    p.config_hash = j.at("config_hash").get<std::string>();
    p.parent = j.at("parent").get<std::string>();
    return p;
}

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
    nlohmann::json header;
    header["config"] = to_json(ckpt.config);
    header["vocab"] = ckpt.vocab.tokens();
    header["provenance"] = to_json(ckpt.provenance);
    auto dir = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& [name, t] : ckpt.weights) {
        const std::size_t bytes = t.size() * 4;
        dir.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"bytes", bytes}});
        offset += bytes;
    }
    header["tensors"] = dir;

    std::string out(kCheckpointMagic, 8);
    out += header.dump();
    out += '\n';
    out.reserve(out.size() + offset);
    for (const auto& [_, t] : ckpt.weights)
        for (float v : t.values()) bin::put_f32(out, v);
    return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
    if (bytes.size() < 8 || bytes.compare(0, 8, kCheckpointMagic) != 0)
        throw FormatError("checkpoint: bad magic at byte offset 0 (expected NEGCKPT1)");
    const auto nl = bytes.find('\n', 8);
    if (nl == std::string::npos) throw FormatError("checkpoint: header is not newline-terminated (truncated file?)");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + static_cast<std::ptrdiff_t>(nl));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint: malformed header: ") + e.what());
    }

    Checkpoint ckpt;
    try {
        ckpt.config = encoder_config_from_json(header.at("config"));
        ckpt.vocab = Vocab::from_tokens(header.at("vocab").get<std::vector<std::string>>());
        ckpt.provenance = provenance_from_json(header.at("provenance"));
        ckpt.config.validate();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint: header field error: ") + e.what());
    } catch (const ContractViolation& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }

    const std::size_t payload_start = nl + 1;
    const std::size_t payload_size = bytes.size() - payload_start;
    const auto layout = encoder_layout(ckpt.config, ckpt.vocab.size());
    const auto& dir = header.at("tensors");
    if (!dir.is_array()) throw FormatError("checkpoint: header.tensors is not an array");

    std::size_t expected_offset = 0;
    for (std::size_t i = 0; i < dir.size(); ++i) {
        const auto& e = dir[i];
        std::string name;
        std::vector<std::size_t> shape;
        std::size_t offset = 0, nbytes = 0;
        try {
            name = e.at("name").get<std::string>();
            shape = e.at("shape").get<std::vector<std::size_t>>();
            offset = e.at("offset").get<std::size_t>();
            nbytes = e.at("bytes").get<std::size_t>();
        } catch (const nlohmann::json::exception& ex) {
            throw FormatError("checkpoint: tensor directory entry " + std::to_string(i) + ": " + ex.what());
        }
        if (i >= layout.size() || layout[i].first != name || layout[i].second != shape)
            throw FormatError("checkpoint: tensor '" + name + "' " + shape_string(shape) +
                              " does not match the configured encoder layout");
        if (shape.empty() || nbytes != Tensor<float>::element_count(shape) * 4 || offset != expected_offset)
            throw FormatError("checkpoint: inconsistent directory entry for tensor '" + name + "'");
        if (offset + nbytes > payload_size)
            throw FormatError("checkpoint: payload for tensor '" + name + "' is missing or truncated");
        std::vector<float> data(nbytes / 4);
        for (std::size_t k = 0; k < data.size(); ++k) data[k] = bin::get_f32(bytes, payload_start + offset + 4 * k);
        ckpt.weights.add(name, Tensor<float>(shape, std::move(data)), true);
        expected_offset += nbytes;
    }
    if (dir.size() != layout.size())
        throw FormatError("checkpoint: directory lists " + std::to_string(dir.size()) + " tensors, layout needs " +
                          std::to_string(layout.size()) + " (first missing: '" + layout[dir.size()].first + "')");
    if (expected_offset != payload_size)
        throw FormatError("checkpoint: " + std::to_string(payload_size - expected_offset) +
                          " trailing bytes after the last tensor");
    return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    bin::write_file_atomic(path, serialize_checkpoint(ckpt));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return deserialize_checkpoint(bin::read_file(path));
}

/// Hash of the serialized weights only.
inline std::string weights_hash(const Checkpoint& ckpt) {
    std::string buf;
    for (const auto& [name, t] : ckpt.weights) {
        buf += name;
        for (float v : t.values()) bin::put_f32(buf, v);
    }
    return bin::fnv1a_hex(buf);
}

} // namespace neglab
