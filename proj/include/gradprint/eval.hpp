// SPDX-License-Identifier: Apache-2.0
#pragma once

// End-to-end corpus evaluation: fingerprint every file named by a corpus's
// ground truth, fit a centroid-initialized registry from the bases, classify
// the members, and score against the true lineage.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gradprint/famclass.hpp"
#include "gradprint/fingerprint.hpp"
#include "gradprint/synth.hpp"
#include "gradprint/tensorfile.hpp"

namespace gradprint {

struct CorpusEvalOptions {
    ExtractionConfig extraction;
    double threshold = 7.0;
    std::size_t pca_components = 2;
};

struct CorpusEvalResult {
    std::vector<std::string> families; // sorted
    std::vector<Fingerprint> base_fps; // aligned with families
    std::vector<Fingerprint> member_fps;
    std::vector<std::size_t> member_true_family; // index into families
    Registry registry;

    struct MemberOutcome {
        std::string file;
        std::string true_family;
        std::string predicted; // family name or "out_of_cluster"
        bool correct = false;
        double min_distance = 0.0;
    };
    std::vector<MemberOutcome> outcomes;
    double accuracy = 0.0;

    std::vector<std::vector<double>> projected_bases;
    std::vector<std::vector<double>> projected_members;
};

inline CorpusEvalResult evaluate_corpus(const std::filesystem::path& corpus_dir,
                                        const CorpusEvalOptions& options = {}) {
    GroundTruth truth = load_ground_truth(corpus_dir);
    if (truth.bases.empty()) raise(ErrorCode::empty_bases, "ground truth lists no base models");

    CorpusEvalResult result;
    for (const auto& [family, file] : truth.bases) { // std::map: family-sorted
        TensorFile model = TensorFile::open(corpus_dir / file);
        std::string stem = std::filesystem::path(file).stem().string();
        result.families.push_back(family);
        result.base_fps.push_back(extract_fingerprint(model, options.extraction, stem));
    }

    for (const auto& member : truth.members) {
        TensorFile model = TensorFile::open(corpus_dir / member.file);
        std::string stem = std::filesystem::path(member.file).stem().string();
        result.member_fps.push_back(extract_fingerprint(model, options.extraction, stem));
        std::size_t family_idx = 0;
        for (; family_idx < result.families.size(); ++family_idx)
            if (result.families[family_idx] == member.family) break;
        if (family_idx == result.families.size())
            raise(ErrorCode::malformed_header,
                  "member '" + member.file + "' references unknown family '" + member.family + "'");
        result.member_true_family.push_back(family_idx);
    }

    RegistryOptions reg_options;
    reg_options.threshold = options.threshold;
    reg_options.pca_components = options.pca_components;
    reg_options.family_labels = result.families;
    result.registry = fit_centroid_kmeans(result.base_fps, result.member_fps, reg_options);

    std::size_t correct = 0;
    for (std::size_t i = 0; i < result.member_fps.size(); ++i) {
        ClassificationReport report = classify_unknown(result.registry, result.member_fps[i]);
        CorpusEvalResult::MemberOutcome outcome;
        outcome.file = truth.members[i].file;
        outcome.true_family = truth.members[i].family;
        outcome.predicted = report.in_family ? report.family : "out_of_cluster";
        outcome.correct = report.in_family && report.family == outcome.true_family;
        outcome.min_distance = report.min_distance;
        if (outcome.correct) ++correct;
        result.outcomes.push_back(std::move(outcome));
    }
    result.accuracy = result.member_fps.empty()
                          ? 0.0
                          : static_cast<double>(correct) /
                                static_cast<double>(result.member_fps.size());

    for (const auto& fp : result.base_fps)
        result.projected_bases.push_back(result.registry.embed(fp));
    for (const auto& fp : result.member_fps)
        result.projected_members.push_back(result.registry.embed(fp));
    return result;
}

// Baseline: randomly initialized K-Means over the same projected points,
// scored on the members under the best cluster -> family bijection.
inline double standard_kmeans_member_accuracy(const CorpusEvalResult& eval, std::uint64_t seed) {
    std::vector<std::vector<double>> points = eval.projected_bases;
    points.insert(points.end(), eval.projected_members.begin(), eval.projected_members.end());
    KMeansResult km = standard_kmeans(points, eval.families.size(), seed);
    std::vector<std::size_t> member_labels(km.labels.begin() +
                                               static_cast<std::ptrdiff_t>(eval.families.size()),
                                           km.labels.end());
    return best_permutation_accuracy(member_labels, eval.member_true_family,
                                     eval.families.size());
}

} // namespace gradprint
