#include "imdpm/expr.hpp"

#include "imdpm/errors.hpp"

#include <cctype>
#include <charconv>
#include <set>
#include <variant>

namespace imdpm::expr {

enum class Op { lor, land, lnot, eq, ne, lt, le, gt, ge, add, sub, neg };

struct Node
{
    enum class Kind { literal, field, param, unary, binary, call };

    Kind kind = Kind::literal;
    Value literal;
    std::string name; // field path, parameter, or function name
    Op op = Op::lor;
    std::vector<std::shared_ptr<const Node>> args;
};

namespace {

using NodePtr = std::shared_ptr<const Node>;

struct Token
{
    enum class Kind { end, ident, param, integer, real, text, symbol };

    Kind kind = Kind::end;
    std::string text;
    std::size_t column = 0;
};

class Lexer
{
public:
    explicit Lexer(std::string_view src) : _src(src) { advance(); }

    const Token& peek() const { return _tok; }

    Token take()
    {
        Token t = _tok;
        advance();
        return t;
    }

    bool accept(std::string_view symbol)
    {
        if (_tok.kind == Token::Kind::symbol && _tok.text == symbol) {
            advance();
            return true;
        }
        return false;
    }

    void expect(std::string_view symbol)
    {
        if (!accept(symbol))
            fail("expected '" + std::string(symbol) + "'");
    }

    [[noreturn]] void fail(const std::string& what) const
    {
        std::string near = _tok.kind == Token::Kind::end ? "end of input" : "'" + _tok.text + "'";
        throw ParseError(what + " near " + near + " in \"" + std::string(_src) + "\"", 1, _tok.column);
    }

private:
    void advance()
    {
        while (_pos < _src.size() && std::isspace(static_cast<unsigned char>(_src[_pos])))
            ++_pos;
        _tok = Token{};
        _tok.column = _pos + 1;
        if (_pos >= _src.size())
            return;

        char c = _src[_pos];
        auto is_ident = [](char ch) { return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '.'; };

        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t start = _pos;
            while (_pos < _src.size() && is_ident(_src[_pos]))
                ++_pos;
            _tok.kind = Token::Kind::ident;
            _tok.text = std::string(_src.substr(start, _pos - start));
        } else if (c == '$') {
            std::size_t start = ++_pos;
            while (_pos < _src.size() && (std::isalnum(static_cast<unsigned char>(_src[_pos])) || _src[_pos] == '_'))
                ++_pos;
            if (_pos == start)
                fail("empty parameter name");
            _tok.kind = Token::Kind::param;
            _tok.text = std::string(_src.substr(start, _pos - start));
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
            std::size_t start = _pos;
            bool real = false;
            while (_pos < _src.size() && (std::isdigit(static_cast<unsigned char>(_src[_pos])) || _src[_pos] == '.')) {
                real = real || _src[_pos] == '.';
                ++_pos;
            }
            _tok.kind = real ? Token::Kind::real : Token::Kind::integer;
            _tok.text = std::string(_src.substr(start, _pos - start));
        } else if (c == '"') {
            std::size_t start = ++_pos;
            while (_pos < _src.size() && _src[_pos] != '"')
                ++_pos;
            if (_pos >= _src.size())
                fail("unterminated string literal");
            _tok.kind = Token::Kind::text;
            _tok.text = std::string(_src.substr(start, _pos - start));
            ++_pos;
        } else {
            static const std::vector<std::string_view> symbols = {"&&", "||", "==", "!=", "<=", ">=", "<", ">",
                                                                  "!",  "(",  ")",  ",",  "+",  "-",  "="};
            for (auto sym : symbols) {
                if (_src.substr(_pos, sym.size()) == sym) {
                    _tok.kind = Token::Kind::symbol;
                    _tok.text = std::string(sym);
                    _pos += sym.size();
                    return;
                }
            }
            _tok.text = std::string(1, c);
            fail("unexpected character");
        }
    }

    std::string_view _src;
    std::size_t _pos = 0;
    Token _tok;
};

const std::set<std::string, std::less<>> functions = {"session_open", "session_count", "int", "num",
                                                      "min",          "max",           "at_ms"};

NodePtr make_binary(Op op, NodePtr lhs, NodePtr rhs)
{
    auto n = std::make_shared<Node>();
    n->kind = Node::Kind::binary;
    n->op = op;
    n->args = {std::move(lhs), std::move(rhs)};
    return n;
}

NodePtr make_unary(Op op, NodePtr operand)
{
    auto n = std::make_shared<Node>();
    n->kind = Node::Kind::unary;
    n->op = op;
    n->args = {std::move(operand)};
    return n;
}

class Parser
{
public:
    explicit Parser(Lexer& lex) : _lex(lex) {}

    NodePtr expression() { return disjunction(); }

    std::vector<NodePtr> call_arguments()
    {
        std::vector<NodePtr> args;
        _lex.expect("(");
        if (!_lex.accept(")")) {
            do
                args.push_back(expression());
            while (_lex.accept(","));
            _lex.expect(")");
        }
        return args;
    }

private:
    NodePtr disjunction()
    {
        auto lhs = conjunction();
        while (_lex.accept("||"))
            lhs = make_binary(Op::lor, lhs, conjunction());
        return lhs;
    }

    NodePtr conjunction()
    {
        auto lhs = negation();
        while (_lex.accept("&&"))
            lhs = make_binary(Op::land, lhs, negation());
        return lhs;
    }

    NodePtr negation()
    {
        if (_lex.accept("!"))
            return make_unary(Op::lnot, negation());
        return comparison();
    }

    NodePtr comparison()
    {
        auto lhs = additive();
        static const std::vector<std::pair<std::string_view, Op>> ops = {
            {"==", Op::eq}, {"!=", Op::ne}, {"<=", Op::le}, {">=", Op::ge}, {"<", Op::lt}, {">", Op::gt}};
        for (auto [sym, op] : ops)
            if (_lex.accept(sym))
                return make_binary(op, lhs, additive());
        return lhs;
    }

    NodePtr additive()
    {
        auto lhs = unary();
        for (;;) {
            if (_lex.accept("+"))
                lhs = make_binary(Op::add, lhs, unary());
            else if (_lex.accept("-"))
                lhs = make_binary(Op::sub, lhs, unary());
            else
                return lhs;
        }
    }

    NodePtr unary()
    {
        if (_lex.accept("-"))
            return make_unary(Op::neg, unary());
        return primary();
    }

    NodePtr primary()
    {
        if (_lex.accept("(")) {
            auto inner = expression();
            _lex.expect(")");
            return inner;
        }
        const Token& tok = _lex.peek();
        auto n = std::make_shared<Node>();
        switch (tok.kind) {
        case Token::Kind::integer: {
            std::int64_t v = 0;
            std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(), v);
            n->literal = v;
            _lex.take();
            return n;
        }
        case Token::Kind::real: {
            double v = 0;
            auto [ptr, ec] = std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(), v);
            if (ec != std::errc() || ptr != tok.text.data() + tok.text.size())
                _lex.fail("malformed number");
            n->literal = v;
            _lex.take();
            return n;
        }
        case Token::Kind::text:
            n->literal = tok.text;
            _lex.take();
            return n;
        case Token::Kind::param:
            n->kind = Node::Kind::param;
            n->name = tok.text;
            _lex.take();
            return n;
        case Token::Kind::ident: {
            if (tok.text == "true" || tok.text == "false") {
                n->literal = tok.text == "true";
                _lex.take();
                return n;
            }
            std::string name = _lex.take().text;
            if (_lex.peek().kind == Token::Kind::symbol && _lex.peek().text == "(") {
                if (!functions.contains(name))
                    _lex.fail("unknown function '" + name + "'");
                n->kind = Node::Kind::call;
                n->name = name;
                n->args = call_arguments();
                return n;
            }
            if (!is_known_field(name) && !name.starts_with("imd.sessions."))
                _lex.fail("unknown state field '" + name + "'");
            n->kind = Node::Kind::field;
            n->name = name;
            return n;
        }
        case Token::Kind::symbol:
        case Token::Kind::end: break;
        }
        _lex.fail("expected an operand");
    }

    Lexer& _lex;
};

bool is_number(const Value& v)
{
    return std::holds_alternative<std::int64_t>(v) || std::holds_alternative<double>(v);
}

double to_double(const Value& v)
{
    if (auto i = std::get_if<std::int64_t>(&v))
        return static_cast<double>(*i);
    return std::get<double>(v);
}

[[noreturn]] void type_error(const std::string& what, const Value& v)
{
    throw ValidationError("expression type error: " + what + ", got " + render(v));
}

bool require_bool(const Value& v, const std::string& what)
{
    if (auto b = std::get_if<bool>(&v))
        return *b;
    type_error(what + " expects a boolean", v);
}

Value to_number(const Value& v)
{
    if (is_number(v))
        return v;
    if (auto s = std::get_if<std::string>(&v)) {
        std::int64_t i = 0;
        auto [ptr, ec] = std::from_chars(s->data(), s->data() + s->size(), i);
        if (ec == std::errc() && ptr == s->data() + s->size())
            return i;
        double d = 0;
        auto [dptr, dec] = std::from_chars(s->data(), s->data() + s->size(), d);
        if (dec == std::errc() && dptr == s->data() + s->size())
            return d;
    }
    type_error("expected a numeric value", v);
}

bool values_equal(const Value& a, const Value& b)
{
    if (is_number(a) && is_number(b))
        return to_double(a) == to_double(b);
    if (a.index() != b.index())
        type_error("cannot compare " + render(a) + " with", b);
    return a == b;
}

Value arithmetic(Op op, const Value& a, const Value& b)
{
    if (!is_number(a) || !is_number(b))
        type_error("arithmetic on non-numbers", is_number(a) ? b : a);
    if (std::holds_alternative<std::int64_t>(a) && std::holds_alternative<std::int64_t>(b)) {
        auto x = std::get<std::int64_t>(a);
        auto y = std::get<std::int64_t>(b);
        return op == Op::add ? x + y : x - y;
    }
    double x = to_double(a);
    double y = to_double(b);
    return op == Op::add ? x + y : x - y;
}

Value evaluate(const Node& n, const WorldState& s, const Bindings& b);

Value call(const Node& n, const WorldState& s, const Bindings& b)
{
    auto arg = [&](std::size_t i) { return evaluate(*n.args.at(i), s, b); };
    auto arity = [&](std::size_t count) {
        if (n.args.size() != count)
            throw ValidationError("function " + n.name + " expects " + std::to_string(count) + " argument(s)");
    };

    if (n.name == "session_open") {
        arity(1);
        auto id = arg(0);
        auto sid = std::get_if<std::string>(&id);
        if (!sid)
            type_error("session_open expects a session id", id);
        return s.imd.sessions.contains(*sid);
    }
    if (n.name == "session_count") {
        arity(0);
        return static_cast<std::int64_t>(s.imd.sessions.size());
    }
    if (n.name == "at_ms") {
        arity(0);
        return b.at ? b.at->millis : std::int64_t{0};
    }
    if (n.name == "int") {
        arity(1);
        auto v = to_number(arg(0));
        if (auto d = std::get_if<double>(&v))
            return static_cast<std::int64_t>(*d);
        return v;
    }
    if (n.name == "num") {
        arity(1);
        return to_double(to_number(arg(0)));
    }
    arity(2);
    auto x = to_number(arg(0));
    auto y = to_number(arg(1));
    bool pick_first = n.name == "min" ? to_double(x) <= to_double(y) : to_double(x) >= to_double(y);
    return pick_first ? x : y;
}

Value evaluate(const Node& n, const WorldState& s, const Bindings& b)
{
    switch (n.kind) {
    case Node::Kind::literal: return n.literal;
    case Node::Kind::field: return get_field(s, n.name);
    case Node::Kind::param: {
        auto it = b.params.find(n.name);
        if (it == b.params.end())
            throw ValidationError("unbound action parameter $" + n.name);
        return it->second;
    }
    case Node::Kind::call: return call(n, s, b);
    case Node::Kind::unary: {
        auto v = evaluate(*n.args[0], s, b);
        if (n.op == Op::lnot)
            return !require_bool(v, "'!'");
        if (auto i = std::get_if<std::int64_t>(&v))
            return -*i;
        if (auto d = std::get_if<double>(&v))
            return -*d;
        type_error("negation expects a number", v);
    }
    case Node::Kind::binary: {
        if (n.op == Op::land)
            return require_bool(evaluate(*n.args[0], s, b), "'&&'") && require_bool(evaluate(*n.args[1], s, b), "'&&'");
        if (n.op == Op::lor)
            return require_bool(evaluate(*n.args[0], s, b), "'||'") || require_bool(evaluate(*n.args[1], s, b), "'||'");
        auto lhs = evaluate(*n.args[0], s, b);
        auto rhs = evaluate(*n.args[1], s, b);
        switch (n.op) {
        case Op::eq: return values_equal(lhs, rhs);
        case Op::ne: return !values_equal(lhs, rhs);
        case Op::add:
        case Op::sub: return arithmetic(n.op, lhs, rhs);
        default: break;
        }
        if (!is_number(lhs) || !is_number(rhs))
            type_error("ordering comparison on non-numbers", is_number(lhs) ? rhs : lhs);
        double x = to_double(lhs);
        double y = to_double(rhs);
        switch (n.op) {
        case Op::lt: return x < y;
        case Op::le: return x <= y;
        case Op::gt: return x > y;
        case Op::ge: return x >= y;
        default: break;
        }
        break;
    }
    }
    throw ValidationError("malformed expression node");
}

void collect_params(const Node& n, std::set<std::string>& out)
{
    if (n.kind == Node::Kind::param)
        out.insert(n.name);
    for (const auto& child : n.args)
        collect_params(*child, out);
}

} // namespace

Expression Expression::parse(std::string_view text)
{
    Lexer lex(text);
    Parser parser(lex);
    Expression e;
    e._root = parser.expression();
    if (lex.peek().kind != Token::Kind::end)
        lex.fail("trailing input");
    e._source = std::string(text);
    return e;
}

Value Expression::eval(const WorldState& state, const Bindings& bindings) const
{
    return evaluate(*_root, state, bindings);
}

bool Expression::test(const WorldState& state, const Bindings& bindings) const
{
    return require_bool(eval(state, bindings), "guard \"" + _source + "\"");
}

std::vector<std::string> Expression::parameters() const
{
    std::set<std::string> names;
    collect_params(*_root, names);
    return {names.begin(), names.end()};
}

Statement Statement::parse(std::string_view text)
{
    Lexer lex(text);
    Statement st;
    st._source = std::string(text);

    if (lex.peek().kind != Token::Kind::ident)
        lex.fail("expected a field assignment or procedure call");
    std::string head = lex.take().text;

    if (lex.peek().kind == Token::Kind::symbol && lex.peek().text == "(") {
        Parser parser(lex);
        auto args = parser.call_arguments();
        std::size_t expected = 0;
        if (head == "open_session") {
            st._kind = Kind::open_session;
            st._target = "imd.sessions";
            expected = 2;
        } else if (head == "close_session") {
            st._kind = Kind::close_session;
            st._target = "imd.sessions";
            expected = 1;
        } else if (head == "apply_therapy_changes") {
            st._kind = Kind::apply_therapy_changes;
            st._target = "imd.therapy";
        } else {
            throw ParseError("unknown procedure '" + head + "' in \"" + st._source + "\"", 1, 1);
        }
        if (args.size() != expected)
            throw ParseError("procedure " + head + " expects " + std::to_string(expected) + " argument(s)", 1, 1);
        for (auto& a : args) {
            Expression e;
            e._root = std::move(a);
            e._source = st._source;
            st._args.push_back(std::move(e));
        }
    } else {
        if (!is_known_field(head))
            throw ParseError("cannot assign unknown field '" + head + "'", 1, 1);
        lex.expect("=");
        Parser parser(lex);
        Expression e;
        e._root = parser.expression();
        e._source = st._source;
        st._kind = Kind::assign;
        st._target = head;
        st._args.push_back(std::move(e));
    }
    if (lex.peek().kind != Token::Kind::end)
        lex.fail("trailing input");
    return st;
}

void Statement::execute(WorldState& state, const Bindings& bindings) const
{
    auto text_arg = [&](std::size_t i) {
        auto v = _args.at(i).eval(state, bindings);
        if (auto s = std::get_if<std::string>(&v))
            return *s;
        type_error("session procedures expect text arguments", v);
    };

    switch (_kind) {
    case Kind::assign: set_field(state, _target, _args[0].eval(state, bindings)); break;
    case Kind::open_session: {
        auto user = text_arg(0);
        state.imd.sessions[text_arg(1)] = user;
        break;
    }
    case Kind::close_session: state.imd.sessions.erase(text_arg(0)); break;
    case Kind::apply_therapy_changes:
        for (const auto& [name, change] : bindings.changes)
            set_field(state, "imd.therapy." + name, change.new_value);
        break;
    }
}

} // namespace imdpm::expr
