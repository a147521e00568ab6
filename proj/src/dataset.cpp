#include "skatepose/dataset.hpp"

#include "skatepose/error.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <limits>

namespace skatepose {

using nlohmann::json;

std::size_t LabeledSequenceDataset::joint_count() const {
    return items.empty() || items.front().frames.empty() ? 0 : items.front().frames.front().joint_count();
}

std::vector<std::size_t> LabeledSequenceDataset::class_counts() const {
    std::vector<std::size_t> counts(num_classes(), 0);
    for (const auto& it : items) {
        if (it.label < counts.size()) ++counts[it.label];
    }
    return counts;
}

void LabeledSequenceDataset::validate() const {
    const std::size_t n = joint_count();
    for (const auto& it : items) {
        if (it.label >= num_classes()) {
            fail(ErrorKind::Validation, "item '" + it.id + "' has label " + std::to_string(it.label) + " outside [0, " +
                                            std::to_string(num_classes()) + ")");
        }
        if (it.frames.empty()) fail(ErrorKind::Validation, "item '" + it.id + "' has no frames");
        for (const auto& f : it.frames) {
            if (f.joint_count() != n) fail(ErrorKind::Validation, "item '" + it.id + "' has an inconsistent joint count");
        }
    }
}

void write_labeled_jsonl(std::ostream& out, const LabeledSequenceDataset& data) {
    for (const auto& it : data.items) {
        json frames = json::array();
        for (const auto& f : it.frames) {
            json joints = json::array();
            for (Eigen::Index j = 0; j < f.coords.rows(); ++j) joints.push_back({f.coords(j, 0), f.coords(j, 1)});
            frames.push_back(std::move(joints));
        }
        out << json{{"id", it.id}, {"label", it.label}, {"frames", std::move(frames)}}.dump() << '\n';
    }
}

LabeledSequenceDataset read_labeled_jsonl(std::istream& in, std::size_t num_classes) {
    LabeledSequenceDataset data;
    std::string line;
    std::size_t line_no = 0;
    std::size_t max_label = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto where = [&] { return "line " + std::to_string(line_no) + ": "; };
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            fail(ErrorKind::Parse, where() + e.what());
        }
        try {
            LabeledSequence item;
            item.id = j.contains("id") ? j.at("id").get<std::string>() : "item" + std::to_string(data.items.size());
            const auto label = j.at("label").get<long long>();
            if (label < 0) fail(ErrorKind::Validation, where() + "negative label");
            item.label = static_cast<std::size_t>(label);
            max_label = std::max(max_label, item.label);
            for (const auto& fr : j.at("frames")) {
                Pose2D p;
                p.coords.resize(static_cast<Eigen::Index>(fr.size()), 2);
                p.mask.assign(fr.size(), false);
                for (std::size_t k = 0; k < fr.size(); ++k) {
                    if (fr[k].size() != 2) fail(ErrorKind::Schema, where() + "every joint needs 2 coordinates");
                    p.coords(static_cast<Eigen::Index>(k), 0) = fr[k][0].get<double>();
                    p.coords(static_cast<Eigen::Index>(k), 1) = fr[k][1].get<double>();
                }
                item.frames.push_back(std::move(p));
            }
            data.items.push_back(std::move(item));
        } catch (const json::exception& e) {
            fail(ErrorKind::Schema, where() + e.what());
        }
    }
    const std::size_t classes = std::max(num_classes, data.items.empty() ? 0 : max_label + 1);
    for (std::size_t c = 0; c < classes; ++c) data.class_names.push_back("class" + std::to_string(c));
    data.validate();
    return data;
}

void save_labeled_jsonl(const std::filesystem::path& path, const LabeledSequenceDataset& data) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
    write_labeled_jsonl(out, data);
}

LabeledSequenceDataset load_labeled_jsonl(const std::filesystem::path& path, std::size_t num_classes) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
    return read_labeled_jsonl(in, num_classes);
}

std::vector<double> flatten_sequence(const LabeledSequence& seq) {
    std::vector<double> out;
    for (const auto& f : seq.frames) {
        const auto v = f.flatten();
        out.insert(out.end(), v.begin(), v.end());
    }
    return out;
}

double nearest_centroid_accuracy(const LabeledSequenceDataset& train, const LabeledSequenceDataset& test) {
    if (train.items.empty() || test.items.empty()) fail(ErrorKind::InsufficientData, "nearest centroid needs data");
    const std::size_t c = std::max(train.num_classes(), test.num_classes());
    const std::size_t dim = flatten_sequence(train.items.front()).size();
    std::vector<std::vector<double>> centroid(c, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> count(c, 0);
    for (const auto& it : train.items) {
        const auto v = flatten_sequence(it);
        if (v.size() != dim) fail(ErrorKind::Shape, "nearest centroid needs equal-length sequences");
        for (std::size_t k = 0; k < dim; ++k) centroid[it.label][k] += v[k];
        ++count[it.label];
    }
    for (std::size_t l = 0; l < c; ++l) {
        for (auto& x : centroid[l]) x /= count[l] == 0 ? 1.0 : static_cast<double>(count[l]);
    }
    std::size_t correct = 0;
    for (const auto& it : test.items) {
        const auto v = flatten_sequence(it);
        if (v.size() != dim) fail(ErrorKind::Shape, "nearest centroid needs equal-length sequences");
        double best = std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t l = 0; l < c; ++l) {
            if (count[l] == 0) continue;
            double d = 0.0;
            for (std::size_t k = 0; k < dim; ++k) d += (v[k] - centroid[l][k]) * (v[k] - centroid[l][k]);
            if (d < best) {
                best = d;
                arg = l;
            }
        }
        correct += arg == it.label ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(test.items.size());
}

}  // namespace skatepose
