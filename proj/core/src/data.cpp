#include "fedalign/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "fedalign/rng.hpp"

namespace fedalign {

Matrix class_centroids(int classes, int dim) {
    if (classes < 1 || dim < 1) {
        throw std::invalid_argument("class_centroids: classes and dim must be positive");
    }
    Matrix centroids(static_cast<std::size_t>(dim), static_cast<std::size_t>(classes));
    if (dim >= classes) {
        // Orthogonal simplex: centroid_c = e_c.
        for (int c = 0; c < classes; ++c) {
            centroids(static_cast<std::size_t>(c), static_cast<std::size_t>(c)) = 1.0;
        }
        return centroids;
    }
    // Fewer dimensions than classes: deterministic unit directions drawn from
    // a fixed stream keyed only by (classes, dim, c).
    for (int c = 0; c < classes; ++c) {
        Rng rng(mix_seed(mix_seed(0x5eedc0de, static_cast<std::uint64_t>(classes) * 131 +
                                                  static_cast<std::uint64_t>(dim)),
                         static_cast<std::uint64_t>(c)));
        double norm2 = 0.0;
        std::vector<double> v(static_cast<std::size_t>(dim));
        do {
            norm2 = 0.0;
            for (double& x : v) {
                x = rng.normal();
                norm2 += x * x;
            }
        } while (norm2 < 1e-12);
        const double inv = 1.0 / std::sqrt(norm2);
        for (int d = 0; d < dim; ++d) {
            centroids(static_cast<std::size_t>(d), static_cast<std::size_t>(c)) = v[static_cast<std::size_t>(d)] * inv;
        }
    }
    return centroids;
}

Dataset gen_blobs(int classes, int dim, int per_class, double spread, std::uint64_t seed) {
    if (classes < 2) throw std::invalid_argument("gen_blobs: need at least 2 classes");
    if (per_class < 1) throw std::invalid_argument("gen_blobs: per_class must be positive");
    if (spread < 0.0) throw std::invalid_argument("gen_blobs: spread must be non-negative");

    const Matrix centroids = class_centroids(classes, dim);
    const std::size_t n = static_cast<std::size_t>(classes) * static_cast<std::size_t>(per_class);

    Dataset ds;
    ds.class_count = classes;
    ds.features = Matrix(static_cast<std::size_t>(dim), n);
    ds.labels.reserve(n);

    Rng rng(seed);
    std::size_t col = 0;
    for (int c = 0; c < classes; ++c) {
        for (int s = 0; s < per_class; ++s) {
            for (int d = 0; d < dim; ++d) {
                ds.features(static_cast<std::size_t>(d), col) =
                    centroids(static_cast<std::size_t>(d), static_cast<std::size_t>(c)) +
                    spread * rng.normal();
            }
            ds.labels.push_back(c);
            ++col;
        }
    }
    return ds;
}

std::vector<ClientShard> partition_dirichlet(const Dataset& dataset, const PartitionSpec& spec) {
    if (spec.clients < 1) {
        throw std::invalid_argument("partition_dirichlet: clients must be >= 1");
    }
    if (!(spec.beta > 0.0)) {
        throw std::invalid_argument("partition_dirichlet: beta must be positive");
    }
    if (dataset.size() == 0) {
        throw std::invalid_argument("partition_dirichlet: empty dataset");
    }

    const int N = spec.clients;
    Rng rng(mix_seed(spec.seed, kPartitionStream));

    std::vector<ClientShard> shards(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) {
        shards[static_cast<std::size_t>(i)].client_id = i;
        shards[static_cast<std::size_t>(i)].class_histogram.assign(
            static_cast<std::size_t>(dataset.class_count), 0);
    }

    for (int c = 0; c < dataset.class_count; ++c) {
        std::vector<std::size_t> class_indices;
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            if (dataset.labels[i] == c) class_indices.push_back(i);
        }
        if (class_indices.empty()) continue;
        rng.shuffle(class_indices);

        // rho ~ Dirichlet(beta * 1_N) via normalized Gamma(beta, 1) draws.
        std::vector<double> rho(static_cast<std::size_t>(N));
        double total = 0.0;
        for (double& r : rho) {
            r = rng.gamma(spec.beta);
            total += r;
        }
        if (total <= 0.0) {
            // All draws underflowed to zero (possible for tiny beta);
            // fall back to a uniform split.
            std::fill(rho.begin(), rho.end(), 1.0);
            total = static_cast<double>(N);
        }

        // Largest-remainder rounding: exact counts that sum to the class size.
        const double n_c = static_cast<double>(class_indices.size());
        std::vector<std::size_t> counts(static_cast<std::size_t>(N));
        std::vector<std::pair<double, int>> remainders;
        std::size_t assigned = 0;
        for (int i = 0; i < N; ++i) {
            const double target = n_c * rho[static_cast<std::size_t>(i)] / total;
            const double base = std::floor(target);
            counts[static_cast<std::size_t>(i)] = static_cast<std::size_t>(base);
            assigned += counts[static_cast<std::size_t>(i)];
            remainders.emplace_back(target - base, i);
        }
        std::stable_sort(remainders.begin(), remainders.end(),
                         [](const auto& a, const auto& b) {
                             if (a.first != b.first) return a.first > b.first;
                             return a.second < b.second;
                         });
        for (std::size_t k = 0; assigned < class_indices.size(); ++k, ++assigned) {
            counts[static_cast<std::size_t>(remainders[k % remainders.size()].second)]++;
        }

        std::size_t cursor = 0;
        for (int i = 0; i < N; ++i) {
            ClientShard& shard = shards[static_cast<std::size_t>(i)];
            for (std::size_t k = 0; k < counts[static_cast<std::size_t>(i)]; ++k) {
                shard.indices.push_back(class_indices[cursor++]);
            }
            shard.class_histogram[static_cast<std::size_t>(c)] +=
                counts[static_cast<std::size_t>(i)];
        }
    }

    for (ClientShard& shard : shards) {
        std::sort(shard.indices.begin(), shard.indices.end());
    }
    return shards;
}

bool has_empty_shard(const std::vector<ClientShard>& shards) {
    for (const ClientShard& s : shards) {
        if (s.indices.empty()) return true;
    }
    return false;
}

std::vector<ClientShard> partition_dirichlet_nonempty(const Dataset& dataset,
                                                      const PartitionSpec& spec,
                                                      int max_attempts) {
    PartitionSpec attempt = spec;
    for (int k = 0; k < max_attempts; ++k) {
        attempt.seed = mix_seed(spec.seed, static_cast<std::uint64_t>(k));
        auto shards = partition_dirichlet(dataset, attempt);
        if (!has_empty_shard(shards)) return shards;
    }
    throw std::runtime_error("partition_dirichlet_nonempty: every draw left a client empty "
                             "after " + std::to_string(max_attempts) + " attempts; "
                             "increase the dataset size or beta");
}

std::vector<Batch> batches(const Dataset& dataset, const ClientShard& shard,
                           int batch_size, std::uint64_t epoch_seed) {
    if (batch_size < 1) throw std::invalid_argument("batches: batch_size must be >= 1");
    std::vector<Batch> out;
    if (shard.indices.empty()) return out;

    std::vector<std::size_t> order = shard.indices;
    Rng rng(epoch_seed);
    rng.shuffle(order);

    const std::size_t dim = dataset.dim();
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
        Batch batch;
        batch.features = Matrix(dim, stop - start);
        batch.labels.reserve(stop - start);
        batch.indices.reserve(stop - start);
        for (std::size_t k = start; k < stop; ++k) {
            const std::size_t src = order[k];
            if (src >= dataset.size()) {
                throw std::out_of_range("batches: shard index " + std::to_string(src) +
                                        " outside dataset of size " +
                                        std::to_string(dataset.size()));
            }
            for (std::size_t d = 0; d < dim; ++d) {
                batch.features(d, k - start) = dataset.features(d, src);
            }
            batch.labels.push_back(dataset.labels[src]);
            batch.indices.push_back(src);
        }
        out.push_back(std::move(batch));
    }
    return out;
}

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("load_csv: cannot open '" + path + "'");
    }
    Dataset ds;
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    std::size_t dim = 0;
    int max_label = -1;

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> values;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t consumed = 0;
                values.push_back(std::stod(cell, &consumed));
                if (consumed != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw std::runtime_error("load_csv: line " + std::to_string(line_no) +
                                         ": cannot parse '" + cell + "' as a number");
            }
        }
        if (values.size() < 2) {
            throw std::runtime_error("load_csv: line " + std::to_string(line_no) +
                                     ": expected label,f1,...,fd");
        }
        const double label = values.front();
        if (label < 0 || label != std::floor(label)) {
            throw std::runtime_error("load_csv: line " + std::to_string(line_no) +
                                     ": label must be a non-negative integer");
        }
        if (dim == 0) {
            dim = values.size() - 1;
        } else if (values.size() - 1 != dim) {
            throw std::runtime_error("load_csv: line " + std::to_string(line_no) +
                                     ": expected " + std::to_string(dim) + " features, got " +
                                     std::to_string(values.size() - 1));
        }
        max_label = std::max(max_label, static_cast<int>(label));
        rows.push_back(std::move(values));
    }
    if (rows.empty()) {
        throw std::runtime_error("load_csv: '" + path + "' holds no samples");
    }

    ds.class_count = max_label + 1;
    ds.features = Matrix(dim, rows.size());
    ds.labels.reserve(rows.size());
    for (std::size_t j = 0; j < rows.size(); ++j) {
        ds.labels.push_back(static_cast<int>(rows[j].front()));
        for (std::size_t d = 0; d < dim; ++d) {
            ds.features(d, j) = rows[j][d + 1];
        }
    }
    return ds;
}

std::string partition_to_json(const std::vector<ClientShard>& shards) {
    nlohmann::json doc = nlohmann::json::object();
    for (const ClientShard& shard : shards) {
        doc[std::to_string(shard.client_id)] = shard.indices;
    }
    return doc.dump();
}

double mean_label_entropy(const std::vector<ClientShard>& shards) {
    double total = 0.0;
    std::size_t counted = 0;
    for (const ClientShard& shard : shards) {
        if (shard.indices.empty()) continue;
        const double n = static_cast<double>(shard.sample_count());
        double entropy = 0.0;
        for (std::size_t count : shard.class_histogram) {
            if (count == 0) continue;
            const double p = static_cast<double>(count) / n;
            entropy -= p * std::log(p);
        }
        total += entropy;
        ++counted;
    }
    return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

}  // namespace fedalign
