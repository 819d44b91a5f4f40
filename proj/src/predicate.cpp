/*
 * Copyright 2026 The rescue-sense Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "rescue/predicate.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

namespace rescue {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool compare(CmpOp op, double lhs, double rhs) noexcept
{
    switch (op) {
    case CmpOp::Less:
        return lhs < rhs;
    case CmpOp::LessEqual:
        return lhs <= rhs;
    case CmpOp::Equal:
        return lhs == rhs;
    case CmpOp::NotEqual:
        return lhs != rhs;
    case CmpOp::GreaterEqual:
        return lhs >= rhs;
    case CmpOp::Greater:
        return lhs > rhs;
    }
    return false;
}

std::string upper(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::toupper(c); });
    return out;
}

bool iequals(std::string_view a, std::string_view b) noexcept
{
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](unsigned char x, unsigned char y) {
               return std::tolower(x) == std::tolower(y);
           });
}

std::string format_number(double v)
{
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, end);
}

/// Hand-written recursive-descent parser over the raw text; offsets are
/// reported relative to the start of the input.
class Parser {
public:
    explicit Parser(std::string_view text) : text_(text) {}

    std::vector<AtomicConstraint> parse()
    {
        std::vector<AtomicConstraint> out;
        skip_ws();
        if (at_end()) {
            return out;
        }
        out.push_back(clause());
        skip_ws();
        while (!at_end()) {
            const auto at = pos_;
            const auto word = identifier();
            if (!iequals(word, "and")) {
                throw PredicateError(ParseErrc::SyntaxError, at, "expected \"and\" between clauses");
            }
            out.push_back(clause());
            skip_ws();
        }
        return out;
    }

private:
    std::string_view text_;
    std::size_t pos_ = 0;

    bool at_end() const noexcept { return pos_ >= text_.size(); }

    void skip_ws() noexcept
    {
        while (!at_end() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
            ++pos_;
        }
    }

    std::string_view identifier()
    {
        skip_ws();
        const auto start = pos_;
        while (!at_end() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
            ++pos_;
        }
        if (start == pos_) {
            throw PredicateError(ParseErrc::SyntaxError, start, "expected a word");
        }
        return text_.substr(start, pos_ - start);
    }

    void expect(char c)
    {
        skip_ws();
        if (at_end() || text_[pos_] != c) {
            throw PredicateError(ParseErrc::SyntaxError, pos_, std::string("expected '") + c + "'");
        }
        ++pos_;
    }

    bool accept(char c)
    {
        skip_ws();
        if (!at_end() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    double number()
    {
        skip_ws();
        const auto start = pos_;
        while (!at_end()) {
            const char c = text_[pos_];
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '+' || c == 'e' ||
                c == 'E') {
                ++pos_;
            } else {
                break;
            }
        }
        if (start == pos_) {
            throw PredicateError(ParseErrc::MalformedNumber, start, "expected a number");
        }
        auto token = text_.substr(start, pos_ - start);
        if (token.front() == '+') {
            token.remove_prefix(1);
        }
        double value = 0.0;
        auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
        if (ec != std::errc() || end != token.data() + token.size() || !std::isfinite(value)) {
            throw PredicateError(ParseErrc::MalformedNumber, start,
                                 "malformed number \"" + std::string(text_.substr(start, pos_ - start)) + "\"");
        }
        return value;
    }

    std::string quoted_or_bare()
    {
        skip_ws();
        const auto start = pos_;
        if (!at_end() && text_[pos_] == '"') {
            ++pos_;
            std::string out;
            while (true) {
                if (at_end()) {
                    throw PredicateError(ParseErrc::SyntaxError, start, "unterminated string");
                }
                char c = text_[pos_++];
                if (c == '"') {
                    break;
                }
                if (c == '\\') {
                    if (at_end()) {
                        throw PredicateError(ParseErrc::SyntaxError, pos_, "dangling escape");
                    }
                    c = text_[pos_++];
                }
                out.push_back(c);
            }
            return out;
        }
        while (!at_end()) {
            const char c = text_[pos_];
            if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.' || c == ':') {
                ++pos_;
            } else {
                break;
            }
        }
        if (start == pos_) {
            throw PredicateError(ParseErrc::SyntaxError, start, "expected a publisher id");
        }
        return std::string(text_.substr(start, pos_ - start));
    }

    CmpOp comparison()
    {
        skip_ws();
        const auto start = pos_;
        auto rest = text_.substr(pos_);
        auto take = [&](std::string_view tok, CmpOp op) -> std::optional<CmpOp> {
            if (rest.substr(0, tok.size()) == tok) {
                pos_ += tok.size();
                return op;
            }
            return std::nullopt;
        };
        // Two-character operators first.
        for (auto [tok, op] : {std::pair{"<=", CmpOp::LessEqual}, std::pair{">=", CmpOp::GreaterEqual},
                               std::pair{"!=", CmpOp::NotEqual}, std::pair{"<", CmpOp::Less},
                               std::pair{">", CmpOp::Greater}, std::pair{"=", CmpOp::Equal}}) {
            if (auto r = take(tok, op)) {
                return *r;
            }
        }
        throw PredicateError(ParseErrc::SyntaxError, start, "expected a comparison operator");
    }

    AtomicConstraint clause()
    {
        skip_ws();
        const auto field_at = pos_;
        const auto field = identifier();

        if (iequals(field, "kind")) {
            expect('=');
            KindSet kinds;
            do {
                skip_ws();
                const auto at = pos_;
                const auto name = identifier_or_empty();
                if (name.empty()) {
                    throw PredicateError(ParseErrc::SyntaxError, at, "expected a sensor kind");
                }
                const auto kind = parse_kind(upper(name));
                if (!kind) {
                    throw PredicateError(ParseErrc::UnknownKind, at, "unknown sensor kind \"" + std::string(name) + "\"");
                }
                kinds.insert(*kind);
            } while (accept(','));
            return KindIs{kinds};
        }
        if (iequals(field, "value")) {
            const auto op = comparison();
            return ValueCmp{op, number()};
        }
        if (iequals(field, "publisher")) {
            expect('=');
            return PublisherIs{quoted_or_bare()};
        }
        if (iequals(field, "geo")) {
            const auto at = pos_;
            if (!iequals(identifier(), "in")) {
                throw PredicateError(ParseErrc::SyntaxError, at, "expected \"in\" after geo");
            }
            expect('[');
            const auto box_at = pos_;
            BoundingBox box;
            box.min_lat = number();
            expect(',');
            box.min_lon = number();
            expect(',');
            box.max_lat = number();
            expect(',');
            box.max_lon = number();
            expect(']');
            if (!box.valid()) {
                throw PredicateError(ParseErrc::InvalidBBox, box_at,
                                     "bounding box needs min <= max within [-90,90] x [-180,180]");
            }
            return GeoWithin{box};
        }
        if (iequals(field, "activity")) {
            expect('=');
            StateSet states;
            do {
                skip_ws();
                const auto at = pos_;
                const auto name = identifier_or_empty();
                if (name.empty()) {
                    throw PredicateError(ParseErrc::SyntaxError, at, "expected an activity state");
                }
                const auto state = parse_state(upper(name));
                if (!state) {
                    throw PredicateError(ParseErrc::UnknownState, at, "unknown activity \"" + std::string(name) + "\"");
                }
                states.insert(*state);
            } while (accept(','));
            return ActivityIs{states};
        }
        if (iequals(field, "confidence")) {
            skip_ws();
            if (text_.substr(pos_, 2) != ">=") {
                throw PredicateError(ParseErrc::SyntaxError, pos_, "confidence only supports \">=\"");
            }
            pos_ += 2;
            skip_ws();
            const auto at = pos_;
            const double v = number();
            if (v != std::floor(v) || v < 0 || v > 100) {
                throw PredicateError(ParseErrc::MalformedNumber, at, "confidence must be an integer in [0, 100]");
            }
            return MinConfidence{static_cast<int>(v)};
        }
        throw PredicateError(ParseErrc::UnknownField, field_at, "unknown field \"" + std::string(field) + "\"");
    }

    std::string_view identifier_or_empty()
    {
        const auto start = pos_;
        while (!at_end() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
            ++pos_;
        }
        return text_.substr(start, pos_ - start);
    }
};

}  // namespace

std::string_view to_string(CmpOp op) noexcept
{
    switch (op) {
    case CmpOp::Less:
        return "<";
    case CmpOp::LessEqual:
        return "<=";
    case CmpOp::Equal:
        return "=";
    case CmpOp::NotEqual:
        return "!=";
    case CmpOp::GreaterEqual:
        return ">=";
    case CmpOp::Greater:
        return ">";
    }
    return "=";
}

bool BoundingBox::valid() const noexcept
{
    return min_lat >= -90.0 && max_lat <= 90.0 && min_lon >= -180.0 && max_lon <= 180.0 && min_lat <= max_lat &&
           min_lon <= max_lon;
}

bool holds(const AtomicConstraint& c, const SensorEvent& e) noexcept
{
    return std::visit(overloaded{
                          [&](const KindIs& k) { return k.kinds.contains(e.kind); },
                          [&](const ValueCmp& v) { return compare(v.op, e.scalar(), v.threshold); },
                          [&](const PublisherIs& p) { return p.publisher_id == e.publisher_id; },
                          [&](const GeoWithin& g) { return g.box.contains(e.position.lat, e.position.lon); },
                          [&](const ActivityIs& a) { return e.activity && a.states.contains(e.activity->state); },
                          [&](const MinConfidence& m) { return e.activity && e.activity->confidence >= m.min; },
                      },
                      c);
}

bool matches(const SubscriptionPredicate& pred, const SensorEvent& event) noexcept
{
    return std::all_of(pred.constraints.begin(), pred.constraints.end(),
                       [&](const AtomicConstraint& c) { return holds(c, event); });
}

std::string_view to_string(ParseErrc code) noexcept
{
    switch (code) {
    case ParseErrc::SyntaxError:
        return "SyntaxError";
    case ParseErrc::UnknownField:
        return "UnknownField";
    case ParseErrc::UnknownKind:
        return "UnknownKind";
    case ParseErrc::UnknownState:
        return "UnknownState";
    case ParseErrc::MalformedNumber:
        return "MalformedNumber";
    case ParseErrc::InvalidBBox:
        return "InvalidBBox";
    }
    return "SyntaxError";
}

PredicateError::PredicateError(ParseErrc code, std::size_t offset, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + " at byte " + std::to_string(offset) + ": " + detail)
    , code_(code)
    , offset_(offset)
{
}

SubscriptionPredicate parse_predicate(std::string_view text, std::string subscription_id)
{
    return SubscriptionPredicate{std::move(subscription_id), Parser(text).parse()};
}

std::string print_predicate(const SubscriptionPredicate& pred)
{
    std::string out;
    for (const auto& c : pred.constraints) {
        if (!out.empty()) {
            out += " and ";
        }
        std::visit(overloaded{
                       [&](const KindIs& k) {
                           out += "kind=";
                           bool first = true;
                           for (auto kind : kAllKinds) {
                               if (k.kinds.contains(kind)) {
                                   out += first ? "" : ",";
                                   out += to_string(kind);
                                   first = false;
                               }
                           }
                       },
                       [&](const ValueCmp& v) {
                           out += "value";
                           out += to_string(v.op);
                           out += format_number(v.threshold);
                       },
                       [&](const PublisherIs& p) {
                           out += "publisher=\"";
                           for (char ch : p.publisher_id) {
                               if (ch == '"' || ch == '\\') {
                                   out += '\\';
                               }
                               out += ch;
                           }
                           out += '"';
                       },
                       [&](const GeoWithin& g) {
                           out += "geo in [" + format_number(g.box.min_lat) + "," + format_number(g.box.min_lon) +
                                  "," + format_number(g.box.max_lat) + "," + format_number(g.box.max_lon) + "]";
                       },
                       [&](const ActivityIs& a) {
                           out += "activity=";
                           bool first = true;
                           for (auto s : kAllStates) {
                               if (a.states.contains(s)) {
                                   out += first ? "" : ",";
                                   out += to_string(s);
                                   first = false;
                               }
                           }
                       },
                       [&](const MinConfidence& m) { out += "confidence>=" + std::to_string(m.min); },
                   },
                   c);
    }
    return out;
}

std::vector<std::string> match_all(std::span<const SubscriptionPredicate> registry, const SensorEvent& event)
{
    std::vector<std::string> ids;
    for (const auto& p : registry) {
        if (matches(p, event)) {
            ids.push_back(p.subscription_id);
        }
    }
    return ids;
}

SubscriptionRegistry::SubscriptionRegistry() : current_(std::make_shared<const RegistryTable>()) {}

SubscriptionRegistry::Snapshot SubscriptionRegistry::snapshot() const
{
    std::lock_guard lock(read_mutex_);
    return current_;
}

void SubscriptionRegistry::publish(Snapshot next)
{
    std::lock_guard lock(read_mutex_);
    current_ = std::move(next);
}

void SubscriptionRegistry::add(std::uint64_t owner, SubscriptionPredicate predicate)
{
    std::lock_guard lock(write_mutex_);
    auto next = std::make_shared<RegistryTable>(*snapshot());
    next->owners.push_back(owner);
    next->predicates.push_back(std::move(predicate));
    publish(std::move(next));
}

template <typename Pred>
std::size_t SubscriptionRegistry::erase_where(Pred pred)
{
    const auto current = snapshot();
    auto next = std::make_shared<RegistryTable>();
    for (std::size_t i = 0; i < current->owners.size(); ++i) {
        if (!pred(current->owners[i], current->predicates[i])) {
            next->owners.push_back(current->owners[i]);
            next->predicates.push_back(current->predicates[i]);
        }
    }
    const auto removed = current->owners.size() - next->owners.size();
    if (removed > 0) {
        publish(std::move(next));
    }
    return removed;
}

bool SubscriptionRegistry::remove(std::uint64_t owner, std::string_view subscription_id)
{
    std::lock_guard lock(write_mutex_);
    return erase_where([&](std::uint64_t o, const SubscriptionPredicate& p) {
               return o == owner && p.subscription_id == subscription_id;
           }) > 0;
}

std::size_t SubscriptionRegistry::remove_owner(std::uint64_t owner)
{
    std::lock_guard lock(write_mutex_);
    return erase_where([&](std::uint64_t o, const SubscriptionPredicate&) { return o == owner; });
}

std::size_t SubscriptionRegistry::count_for(std::uint64_t owner) const
{
    const auto snap = snapshot();
    return static_cast<std::size_t>(std::count(snap->owners.begin(), snap->owners.end(), owner));
}

std::size_t SubscriptionRegistry::size() const
{
    return snapshot()->owners.size();
}

}  // namespace rescue
