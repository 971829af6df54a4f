#include "stocksel/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

#include "stocksel/latent_models.hpp"

namespace stocksel {

namespace {

/// Renumbers labels by first appearance and reorders centers to match.
void relabel(ClusterModel& m, const std::vector<int>& raw, const Eigen::MatrixXd& raw_centers,
             const std::vector<std::size_t>* raw_exemplars = nullptr) {
    std::map<int, int> remap;
    m.assignment.resize(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        auto [it, inserted] = remap.try_emplace(raw[i], static_cast<int>(remap.size()));
        m.assignment[i] = it->second;
    }
    m.centers.resize(static_cast<Eigen::Index>(remap.size()), raw_centers.cols());
    if (raw_exemplars) m.exemplars.assign(remap.size(), 0);
    for (const auto& [old_id, new_id] : remap) {
        m.centers.row(new_id) = raw_centers.row(old_id);
        if (raw_exemplars) m.exemplars[static_cast<std::size_t>(new_id)] = (*raw_exemplars)[static_cast<std::size_t>(old_id)];
    }
}

double squared_distance(const Eigen::MatrixXd& p, Eigen::Index i, const Eigen::MatrixXd& c, Eigen::Index k) {
    return (p.row(i) - c.row(k)).squaredNorm();
}

}  // namespace

std::string to_string(ClusterMethod m) {
    switch (m) {
        case ClusterMethod::KMeans: return "kmeans";
        case ClusterMethod::Ward: return "ward";
        case ClusterMethod::AffinityPropagation: return "affinity";
    }
    return "unknown";
}

std::vector<std::size_t> ClusterModel::members(int cluster) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignment.size(); ++i)
        if (assignment[i] == cluster) out.push_back(i);
    return out;
}

double ClusterModel::distance_to_center(std::size_t point) const {
    return (points.row(static_cast<Eigen::Index>(point)) - centers.row(assignment.at(point))).norm();
}

double ClusterModel::inertia() const {
    double total = 0.0;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        total += (points.row(static_cast<Eigen::Index>(i)) - centers.row(assignment[i])).squaredNorm();
    }
    return total;
}

// ---------------------------------------------------------------------------
// KMeans

ClusterModel kmeans(const Eigen::MatrixXd& points, std::size_t k, std::uint64_t seed, int max_iter) {
    const Eigen::Index n = points.rows();
    const auto kk = static_cast<Eigen::Index>(k);
    if (k < 1 || kk > n) {
        throw ParameterError("kmeans needs 1 <= k <= n (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
    }
    if (max_iter < 1) throw ParameterError("kmeans max_iter must be >= 1");

    std::mt19937_64 rng(seed);
    Eigen::MatrixXd centers(kk, points.cols());
    std::vector<bool> chosen(static_cast<std::size_t>(n), false);
    {
        std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
        const Eigen::Index c0 = first(rng);
        centers.row(0) = points.row(c0);
        chosen[static_cast<std::size_t>(c0)] = true;
        Eigen::VectorXd d2(n);
        for (Eigen::Index i = 0; i < n; ++i) d2(i) = squared_distance(points, i, centers, 0);
        for (Eigen::Index c = 1; c < kk; ++c) {
            const double total = d2.sum();
            Eigen::Index pick = -1;
            if (total > 0.0) {
                std::uniform_real_distribution<double> u(0.0, total);
                double target = u(rng);
                for (Eigen::Index i = 0; i < n; ++i) {
                    if (d2(i) <= 0.0) continue;
                    pick = i;
                    target -= d2(i);
                    if (target <= 0.0) break;
                }
            } else {
                for (Eigen::Index i = 0; i < n; ++i)
                    if (!chosen[static_cast<std::size_t>(i)]) { pick = i; break; }
            }
            centers.row(c) = points.row(pick);
            chosen[static_cast<std::size_t>(pick)] = true;
            for (Eigen::Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), squared_distance(points, i, centers, c));
        }
    }

    ClusterModel m;
    m.method = ClusterMethod::KMeans;
    m.points = points;
    std::vector<int> labels(static_cast<std::size_t>(n), -1);
    bool changed = true;
    int iter = 0;
    while (changed && iter < max_iter) {
        ++iter;
        changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double best_d = squared_distance(points, i, centers, 0);
            for (Eigen::Index c = 1; c < kk; ++c) {
                const double d = squared_distance(points, i, centers, c);
                if (d < best_d) { best_d = d; best = static_cast<int>(c); }
            }
            if (labels[static_cast<std::size_t>(i)] != best) {
                labels[static_cast<std::size_t>(i)] = best;
                changed = true;
            }
        }
        // Repair empty clusters with the point farthest from its current center.
        std::vector<Eigen::Index> counts(static_cast<std::size_t>(kk), 0);
        for (int l : labels) ++counts[static_cast<std::size_t>(l)];
        for (Eigen::Index c = 0; c < kk; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) continue;
            Eigen::Index far = -1;
            double far_d = -1.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const int l = labels[static_cast<std::size_t>(i)];
                if (counts[static_cast<std::size_t>(l)] <= 1) continue;
                const double d = squared_distance(points, i, centers, l);
                if (d > far_d) { far_d = d; far = i; }
            }
            --counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(far)])];
            labels[static_cast<std::size_t>(far)] = static_cast<int>(c);
            ++counts[static_cast<std::size_t>(c)];
            centers.row(c) = points.row(far);
            changed = true;
        }
        centers.setZero();
        for (Eigen::Index i = 0; i < n; ++i) centers.row(labels[static_cast<std::size_t>(i)]) += points.row(i);
        for (Eigen::Index c = 0; c < kk; ++c) centers.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
        double inertia = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) inertia += squared_distance(points, i, centers, labels[static_cast<std::size_t>(i)]);
        m.inertia_history.push_back(inertia);
    }
    m.converged = !changed;
    if (!m.converged) m.warnings.push_back("kmeans stopped at max_iter before assignments settled");
    relabel(m, labels, centers);
    return m;
}

// ---------------------------------------------------------------------------
// Ward

ClusterModel ward_agglomerative(const Eigen::MatrixXd& points, std::size_t n_clusters,
                                const std::optional<Connectivity>& connectivity) {
    const auto n = static_cast<std::size_t>(points.rows());
    if (n_clusters < 1 || n_clusters > n) {
        throw ParameterError("ward needs 1 <= n_clusters <= n (n_clusters=" + std::to_string(n_clusters) +
                             ", n=" + std::to_string(n) + ")");
    }
    struct Node {
        std::size_t id;
        std::vector<std::size_t> members;
        Eigen::RowVectorXd centroid;
        std::set<std::size_t> neighbours;  // ids of adjacent active nodes
    };
    std::vector<Node> active;
    active.reserve(n);
    for (std::size_t i = 0; i < n; ++i) active.push_back({i, {i}, points.row(static_cast<Eigen::Index>(i)), {}});
    bool restricted = connectivity.has_value();
    if (restricted) {
        for (const auto& [a, b] : *connectivity) {
            if (a >= n || b >= n) throw ParameterError("connectivity edge references an invalid point");
            if (a == b) continue;
            active[a].neighbours.insert(b);
            active[b].neighbours.insert(a);
        }
    }

    ClusterModel m;
    m.method = ClusterMethod::Ward;
    m.points = points;
    std::size_t next_id = n;
    while (active.size() > n_clusters) {
        std::size_t best_a = 0, best_b = 0;
        double best_cost = std::numeric_limits<double>::infinity();
        std::pair<std::size_t, std::size_t> best_ids{0, 0};
        bool found = false;
        for (std::size_t a = 0; a < active.size(); ++a) {
            for (std::size_t b = a + 1; b < active.size(); ++b) {
                if (restricted && !active[a].neighbours.count(active[b].id)) continue;
                const double na = static_cast<double>(active[a].members.size());
                const double nb = static_cast<double>(active[b].members.size());
                const double cost = na * nb / (na + nb) * (active[a].centroid - active[b].centroid).squaredNorm();
                const std::pair<std::size_t, std::size_t> ids{std::min(active[a].id, active[b].id),
                                                             std::max(active[a].id, active[b].id)};
                if (!found || cost < best_cost || (cost == best_cost && ids < best_ids)) {
                    found = true;
                    best_cost = cost;
                    best_ids = ids;
                    best_a = a;
                    best_b = b;
                }
            }
        }
        if (!found) {
            restricted = false;
            m.warnings.push_back("connectivity graph exhausted with " + std::to_string(active.size()) +
                                 " components; continuing with unrestricted merges");
            continue;
        }
        Node& left = active[best_a];
        Node& right = active[best_b];
        const double nl = static_cast<double>(left.members.size());
        const double nr = static_cast<double>(right.members.size());
        Node merged;
        merged.id = next_id++;
        merged.centroid = (nl * left.centroid + nr * right.centroid) / (nl + nr);
        merged.members = left.members;
        merged.members.insert(merged.members.end(), right.members.begin(), right.members.end());
        std::sort(merged.members.begin(), merged.members.end());
        merged.neighbours = left.neighbours;
        merged.neighbours.insert(right.neighbours.begin(), right.neighbours.end());
        merged.neighbours.erase(left.id);
        merged.neighbours.erase(right.id);
        m.merges.push_back({best_ids.first, best_ids.second, best_cost, merged.members.size()});
        const std::size_t left_id = left.id, right_id = right.id;
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(best_b));
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(best_a));
        for (auto& node : active) {
            if (node.neighbours.erase(left_id) + node.neighbours.erase(right_id) > 0) node.neighbours.insert(merged.id);
        }
        active.push_back(std::move(merged));
    }

    std::vector<int> raw(n, 0);
    Eigen::MatrixXd raw_centers(static_cast<Eigen::Index>(active.size()), points.cols());
    for (std::size_t c = 0; c < active.size(); ++c) {
        raw_centers.row(static_cast<Eigen::Index>(c)) = active[c].centroid;
        for (std::size_t p : active[c].members) raw[p] = static_cast<int>(c);
    }
    relabel(m, raw, raw_centers);
    return m;
}

// ---------------------------------------------------------------------------
// Affinity propagation

double median_off_diagonal(const Eigen::MatrixXd& s) {
    std::vector<double> vals;
    const Eigen::Index n = s.rows();
    vals.reserve(static_cast<std::size_t>(n * (n - 1)));
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index k = 0; k < n; ++k)
            if (i != k) vals.push_back(s(i, k));
    if (vals.empty()) throw ParameterError("median of an empty similarity set");
    std::sort(vals.begin(), vals.end());
    const std::size_t mid = vals.size() / 2;
    return vals.size() % 2 ? vals[mid] : 0.5 * (vals[mid - 1] + vals[mid]);
}

AffinityState make_affinity_state(const Eigen::MatrixXd& points, double damping, std::optional<double> preference) {
    const Eigen::Index n = points.rows();
    if (n < 2) throw ParameterError("affinity propagation needs at least 2 points");
    if (!(damping >= 0.5 && damping < 1.0)) throw ParameterError("damping must lie in [0.5, 1)");
    AffinityState st;
    st.damping = damping;
    st.s.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index k = 0; k < n; ++k) st.s(i, k) = -(points.row(i) - points.row(k)).squaredNorm();
    const double pref = preference ? *preference : median_off_diagonal(st.s);
    if (!std::isfinite(pref)) throw ParameterError("preference must be finite");
    st.s.diagonal().setConstant(pref);
    st.r = Eigen::MatrixXd::Zero(n, n);
    st.a = Eigen::MatrixXd::Zero(n, n);
    return st;
}

void AffinityState::iterate() {
    const Eigen::Index n = s.rows();
    // r(i,k) = s(i,k) - max_{k' != k} { a(i,k') + s(i,k') }
    for (Eigen::Index i = 0; i < n; ++i) {
        double first = -std::numeric_limits<double>::infinity();
        double second = first;
        Eigen::Index arg = -1;
        for (Eigen::Index k = 0; k < n; ++k) {
            const double v = a(i, k) + s(i, k);
            if (v > first) {
                second = first;
                first = v;
                arg = k;
            } else if (v > second) {
                second = v;
            }
        }
        for (Eigen::Index k = 0; k < n; ++k) {
            const double computed = s(i, k) - (k == arg ? second : first);
            r(i, k) = damping * r(i, k) + (1.0 - damping) * computed;
        }
    }
    // a(i,k) = min(0, r(k,k) + sum_{i' not in {i,k}} max(0, r(i',k)))   for i != k
    // a(k,k) = sum_{i' != k} max(0, r(i',k))
    for (Eigen::Index k = 0; k < n; ++k) {
        double positive_sum = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            if (i != k) positive_sum += std::max(0.0, r(i, k));
        for (Eigen::Index i = 0; i < n; ++i) {
            const double computed = i == k ? positive_sum
                                           : std::min(0.0, r(k, k) + positive_sum - std::max(0.0, r(i, k)));
            a(i, k) = damping * a(i, k) + (1.0 - damping) * computed;
        }
    }
    ++iterations;
}

std::vector<std::size_t> AffinityState::exemplars() const {
    std::vector<std::size_t> out;
    for (Eigen::Index k = 0; k < s.rows(); ++k)
        if (r(k, k) + a(k, k) > 0.0) out.push_back(static_cast<std::size_t>(k));
    return out;
}

ClusterModel affinity_propagation(const Eigen::MatrixXd& points, const AffinityOptions& opts) {
    if (opts.max_iter < 1 || opts.conv_iters < 1) throw ParameterError("max_iter and conv_iters must be >= 1");
    AffinityState st = make_affinity_state(points, opts.damping, opts.preference);
    const Eigen::Index n = points.rows();

    ClusterModel m;
    m.method = ClusterMethod::AffinityPropagation;
    m.points = points;

    std::vector<std::size_t> exemplars;
    // All points coincide: messages never break the symmetry, so resolve directly.
    double off_min = std::numeric_limits<double>::infinity(), off_max = -off_min;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index k = 0; k < n; ++k)
            if (i != k) { off_min = std::min(off_min, st.s(i, k)); off_max = std::max(off_max, st.s(i, k)); }
    if (off_min == off_max) {
        if (st.s(0, 0) > off_max) {
            for (Eigen::Index k = 0; k < n; ++k) exemplars.push_back(static_cast<std::size_t>(k));
        } else {
            exemplars.push_back(0);
        }
        m.warnings.push_back("all pairwise similarities equal; resolved without message passing");
    } else {
        int stable = 0;
        std::vector<std::size_t> previous;
        bool done = false;
        for (int it = 0; it < opts.max_iter; ++it) {
            st.iterate();
            if (!st.r.allFinite() || !st.a.allFinite()) throw NumericalError("affinity messages became non-finite");
            auto current = st.exemplars();
            stable = (current == previous) ? stable + 1 : 1;
            previous = std::move(current);
            if (!previous.empty() && stable >= opts.conv_iters) {
                done = true;
                break;
            }
        }
        if (previous.empty()) {
            throw AffinityNonConvergenceError("affinity propagation found no exemplar in " +
                                                  std::to_string(opts.max_iter) + " iterations",
                                              st);
        }
        if (!done) {
            m.converged = false;
            m.warnings.push_back("affinity propagation hit max_iter before the exemplar set settled");
        }
        exemplars = previous;
    }

    std::vector<int> raw(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto self = std::find(exemplars.begin(), exemplars.end(), static_cast<std::size_t>(i));
        if (self != exemplars.end()) {
            raw[static_cast<std::size_t>(i)] = static_cast<int>(self - exemplars.begin());
            continue;
        }
        std::size_t best = 0;
        for (std::size_t e = 1; e < exemplars.size(); ++e) {
            if (st.s(i, static_cast<Eigen::Index>(exemplars[e])) > st.s(i, static_cast<Eigen::Index>(exemplars[best]))) best = e;
        }
        raw[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    Eigen::MatrixXd raw_centers(static_cast<Eigen::Index>(exemplars.size()), points.cols());
    for (std::size_t e = 0; e < exemplars.size(); ++e)
        raw_centers.row(static_cast<Eigen::Index>(e)) = points.row(static_cast<Eigen::Index>(exemplars[e]));
    relabel(m, raw, raw_centers, &exemplars);
    return m;
}

// ---------------------------------------------------------------------------
// Quarterly schedule

ClusterModel cluster_window(const ReturnsPanel& window, const QuarterlyParams& params) {
    if (window.n_days() < kMinClusterWindow) {
        throw InsufficientHistoryError("clustering window has " + std::to_string(window.n_days()) +
                                       " trading days, need at least " + std::to_string(kMinClusterWindow));
    }
    Eigen::MatrixXd points;
    if (params.space == EmbeddingSpace::Pca) {
        const PcaModel pca = fit_pca(window, params.pca_components);
        points = pca_reconstruct(pca, window).latent_coords;
    } else {
        points = spectral_embed(window, 2).coords;
    }

    ClusterModel m;
    std::vector<std::string> notes;
    switch (params.method) {
        case ClusterMethod::KMeans:
            m = kmeans(points, params.kmeans_k, params.seed, params.kmeans_max_iter);
            break;
        case ClusterMethod::AffinityPropagation:
            m = affinity_propagation(points, params.affinity);
            break;
        case ClusterMethod::Ward: {
            std::optional<Connectivity> conn;
            if (params.ward_connectivity) {
                const Eigen::MatrixXd s = sample_covariance(window.returns);
                const double lambda = params.glasso_lambda ? *params.glasso_lambda : default_glasso_lambda(s);
                std::vector<Edge> edges;
                try {
                    edges = graphical_lasso(s, lambda, params.glasso).edges;
                } catch (const GlassoConvergenceError& e) {
                    edges = e.last_iterate().edges;
                    notes.push_back(std::string(e.what()) + "; using last iterate for connectivity");
                } catch (const NumericalError& e) {
                    notes.push_back(std::string(e.what()) + "; clustering without connectivity");
                }
                if (!edges.empty() || notes.empty()) {
                    conn.emplace();
                    for (const auto& e : edges) conn->emplace_back(e.source, e.target);
                }
            }
            m = ward_agglomerative(points, params.ward_clusters, conn);
            break;
        }
    }
    m.tickers = window.tickers;
    m.warnings.insert(m.warnings.begin(), notes.begin(), notes.end());
    return m;
}

std::vector<QuarterModel> quarterly_clusters(const ReturnsPanel& rp, const TradingCalendar& cal,
                                             const QuarterlyParams& params) {
    if (cal.dates != rp.dates) throw ParameterError("calendar does not match the returns panel");
    std::vector<QuarterModel> out;
    for (std::size_t q = 1; q < cal.quarter_starts.size(); ++q) {
        const std::size_t begin = cal.quarter_starts[q - 1];
        const std::size_t end = cal.quarter_starts[q];
        QuarterModel qm;
        qm.quarter_start = cal.dates[end];
        qm.start_index = end;
        if (params.static_clusters && !out.empty()) {
            qm.model = out.front().model;
        } else {
            if (end - begin < kMinClusterWindow) {
                throw InsufficientHistoryError("quarter before " + format_date(cal.dates[end]) + " has only " +
                                               std::to_string(end - begin) + " trading days");
            }
            qm.model = cluster_window(slice_columns(rp, begin, end), params);
        }
        out.push_back(std::move(qm));
    }
    if (out.empty()) throw InsufficientHistoryError("no quarter has a full previous quarter of history");
    return out;
}

void write_clusters_csv(std::ostream& out, const std::vector<QuarterModel>& models) {
    out << "quarter,ticker,cluster_id,dist_to_center\n";
    const auto old = out.precision(17);
    for (const auto& qm : models) {
        for (std::size_t i = 0; i < qm.model.assignment.size(); ++i) {
            const std::string ticker = i < qm.model.tickers.size() ? qm.model.tickers[i] : std::to_string(i);
            out << format_date(qm.quarter_start) << ',' << ticker << ',' << qm.model.assignment[i] << ','
                << qm.model.distance_to_center(i) << '\n';
        }
    }
    out.precision(old);
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw ParameterError("labelings differ in length");
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> ca, cb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[{a[i], b[i]}] += 1.0;
        ca[a[i]] += 1.0;
        cb[b[i]] += 1.0;
    }
    auto pairs = [](double x) { return x * (x - 1.0) / 2.0; };
    double sum_joint = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (const auto& [k, v] : joint) sum_joint += pairs(v);
    for (const auto& [k, v] : ca) sum_a += pairs(v);
    for (const auto& [k, v] : cb) sum_b += pairs(v);
    const double total = pairs(static_cast<double>(a.size()));
    const double expected = total > 0.0 ? sum_a * sum_b / total : 0.0;
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return 1.0;
    return (sum_joint - expected) / (max_index - expected);
}

}  // namespace stocksel
